"""
Wasserstein-1 distances between weighted empirical measures and against
reference densities on the line
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, List, Optional, Sequence

import numpy as np
from scipy import integrate, stats
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from config import settings
from errors import ConfigError, DimensionError, NumericalError, RangeError
from measures import WeightFamily, WeightedEmpiricalMeasure, occupation_measure

if TYPE_CHECKING:
    from integrator import TrajectorySet

logger = logging.getLogger(__name__)

# exp(-36.8) ~ 1e-16: tails below this fraction of the peak are dropped
TAIL_LOG_DROP = math.log(1e16)


@dataclass(frozen=True)
class Density1D:
    """
    Normalized density on R given by an unnormalized log-density

    Tabulates the CDF on a uniform grid covering the region where the density
    exceeds 1e-16 of its peak; between nodes the CDF is linear, so its running
    integral is exact piecewise-quadratic.
    """

    log_density: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    table_size: int = 0
    name: str = "density"
    lower: float = field(init=False)
    upper: float = field(init=False)
    log_norm: float = field(init=False)
    grid: np.ndarray = field(init=False, repr=False)
    cdf_table: np.ndarray = field(init=False, repr=False)
    cdf_integral: np.ndarray = field(init=False, repr=False)
    quantile_levels: np.ndarray = field(init=False, repr=False)
    quantile_table: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        size = self.table_size or settings.reference_table_size
        if size < 16:
            raise ConfigError(f"reference table needs at least 16 points, got {size}")
        lower, upper, peak = self._support()

        shifted = lambda x: np.exp(self.log_density(np.asarray(x, dtype=np.float64)) - peak)
        mass, _, info, *message = integrate.quad(shifted, lower, upper, limit=400,
                                                 epsabs=0.0, epsrel=1e-13, full_output=1)
        if message or not (mass > 0 and math.isfinite(mass)):
            raise NumericalError(f"density {self.name} could not be normalized")
        log_norm = peak + math.log(mass)

        grid = np.linspace(lower, upper, size)
        pdf = np.exp(self.log_density(grid) - log_norm)
        cdf = integrate.cumulative_simpson(pdf, x=grid, initial=0.0)
        cdf = np.maximum.accumulate(np.clip(cdf / cdf[-1], 0.0, 1.0))
        h = grid[1] - grid[0]
        # Running integral of the piecewise-linear CDF
        cdf_integral = np.concatenate(([0.0], np.cumsum(0.5 * h * (cdf[:-1] + cdf[1:]))))

        n_quantiles = max(10_000, size // 2)
        levels = (np.arange(n_quantiles) + 0.5) / n_quantiles
        quantiles = np.interp(levels, cdf, grid)

        for name, value in (("table_size", size), ("lower", lower), ("upper", upper),
                            ("log_norm", log_norm), ("grid", grid), ("cdf_table", cdf),
                            ("cdf_integral", cdf_integral), ("quantile_levels", levels),
                            ("quantile_table", quantiles)):
            if isinstance(value, np.ndarray):
                value.setflags(write=False)
            object.__setattr__(self, name, value)
        logger.debug(f"Density {self.name}: support [{lower:.3f}, {upper:.3f}], log C={log_norm:.6f}")

    def _support(self):
        """Interval outside of which the density is below 1e-16 of its peak"""
        half = 1.0
        for _ in range(60):
            xs = np.linspace(-half, half, 4001)
            logs = self.log_density(xs)
            peak = float(np.max(logs))
            if logs[0] < peak - TAIL_LOG_DROP and logs[-1] < peak - TAIL_LOG_DROP:
                above = xs[logs >= peak - TAIL_LOG_DROP]
                step = xs[1] - xs[0]
                return float(above[0] - step), float(above[-1] + step), peak
            half *= 2.0
        raise NumericalError(f"density {self.name} has no detectable tails; not normalizable")

    @property
    def normalization(self) -> float:
        """C = integral of the unnormalized density"""
        return math.exp(self.log_norm)

    def pdf(self, x) -> np.ndarray:
        return np.exp(self.log_density(np.asarray(x, dtype=np.float64)) - self.log_norm)

    def cdf(self, x) -> np.ndarray:
        return np.interp(np.asarray(x, dtype=np.float64), self.grid, self.cdf_table, left=0.0, right=1.0)

    def quantile(self, u) -> np.ndarray:
        return np.interp(np.asarray(u, dtype=np.float64), self.cdf_table, self.grid)

    def cdf_antiderivative(self, x) -> np.ndarray:
        """Integral of the CDF from -inf to x"""
        x = np.asarray(x, dtype=np.float64)
        h = self.grid[1] - self.grid[0]
        clipped = np.clip(x, self.lower, self.upper)
        j = np.minimum(((clipped - self.lower) / h).astype(np.int64), self.grid.size - 2)
        dx = clipped - self.grid[j]
        slope = (self.cdf_table[j + 1] - self.cdf_table[j]) / h
        inside = self.cdf_integral[j] + self.cdf_table[j] * dx + 0.5 * slope * dx * dx
        return inside + np.maximum(x - self.upper, 0.0)

    def expect(self, fn: Callable[[float], float]) -> float:
        """Expectation of fn under the density by adaptive quadrature"""
        value, _ = integrate.quad(lambda x: fn(x) * float(self.pdf(x)), self.lower, self.upper,
                                  limit=400, epsabs=1e-14, epsrel=1e-12)
        return value

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Inverse-CDF sampling"""
        return self.quantile(rng.uniform(0.0, 1.0, n))

    def quantile_measure(self, n: int) -> WeightedEmpiricalMeasure:
        """Equal-weight discretization on the midpoint quantiles (k + 1/2) / n"""
        levels = (np.arange(n) + 0.5) / n
        return WeightedEmpiricalMeasure.uniform(self.quantile(levels))


def _require_1d(*measures: WeightedEmpiricalMeasure) -> None:
    for mu in measures:
        if mu.dimension != 1:
            raise DimensionError(f"one-dimensional distance needs d = 1, got d = {mu.dimension}")


def w1_1d(mu: WeightedEmpiricalMeasure, nu: WeightedEmpiricalMeasure) -> float:
    """
    Exact W1 between two measures on the line
    Args:
        mu: First measure (d = 1)
        nu: Second measure (d = 1)
    Returns:
        Integral of |F_mu - F_nu| over the merged support
    """
    _require_1d(mu, nu)
    return float(stats.wasserstein_distance(mu.support[:, 0], nu.support[:, 0],
                                            mu.weights, nu.weights))


def w1_1d_vs_density(mu: WeightedEmpiricalMeasure, ref: Density1D) -> float:
    """
    W1 between a measure on the line and a tabulated density
    Args:
        mu: Measure (d = 1)
        ref: Reference density
    Returns:
        Integral of |F_mu(x) - F*(x)| dx
    """
    _require_1d(mu)
    order = np.argsort(mu.support[:, 0], kind="stable")
    atoms = mu.support[order, 0]
    levels = np.cumsum(mu.weights[order])
    levels[-1] = 1.0

    G = ref.cdf_antiderivative
    head = float(G(atoms[0]))
    # Beyond the last atom: integral of (1 - F*)
    last = atoms[-1]
    end = max(last, ref.upper)
    tail = float((end - last) - (G(end) - G(last)))

    a, b, c = atoms[:-1], atoms[1:], levels[:-1]
    split = np.clip(ref.quantile(c), a, b)
    Ga, Gb, Gs = G(a), G(b), G(split)
    middle = c * (split - a) - (Gs - Ga) + (Gb - Gs) - c * (b - split)
    return head + float(np.sum(middle)) + tail


def w1_assignment_oracle(mu: WeightedEmpiricalMeasure, nu: WeightedEmpiricalMeasure) -> float:
    """
    Exact W1 for equal-count uniform measures by optimal assignment
    Args:
        mu: Uniform measure with n <= 10 atoms
        nu: Uniform measure with the same number of atoms
    Returns:
        Minimum over assignments of the mean Euclidean distance
    """
    n = mu.size
    if nu.size != n or n > 10:
        raise ConfigError(f"assignment oracle needs equal atom counts <= 10, got {mu.size} and {nu.size}")
    if mu.dimension != nu.dimension:
        raise DimensionError("measures live in different dimensions")
    for m in (mu, nu):
        if not np.allclose(m.weights, 1.0 / n, rtol=0.0, atol=1e-12):
            raise ConfigError("assignment oracle needs uniform weights")
    cost = cdist(mu.support, nu.support)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


@dataclass(frozen=True)
class CurvePoint:
    step: int
    t: float
    mean_w1: float
    stderr: float
    n_paths: int


def path_distances(traj: "TrajectorySet", family: WeightFamily, ref: Density1D, step: int,
                   threads: Optional[int] = None) -> np.ndarray:
    """Per-path W1 between the occupation measure at a grid step and the reference"""
    t = float(traj.times[step])

    def one(path: int) -> float:
        mu = occupation_measure(traj.times[: step + 1], traj.states[path, : step + 1], family, t)
        return w1_1d_vs_density(mu, ref)

    threads = settings.threads if threads is None else threads
    if threads <= 1:
        return np.array([one(p) for p in range(traj.n_paths)])
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return np.array(list(pool.map(one, range(traj.n_paths))))


def mean_w1_curve(traj: "TrajectorySet", family: WeightFamily, ref: Density1D,
                  checkpoints: Sequence[int], threads: Optional[int] = None) -> List[CurvePoint]:
    """
    Average over paths of W1(occupation measure at t, reference)
    Args:
        traj: Simulated trajectories (d = 1)
        family: Weight family used to build the occupation measures
        ref: Reference density
        checkpoints: Grid steps at which to evaluate; density families need
            steps >= 1 (at t = 0 their occupation measure is empty and
            DomainError is raised), the discrete family uses delta_{Z_0} there
        threads: Worker threads for the per-path distances
    Returns:
        List of CurvePoint with mean and standard error across paths
    """
    if traj.dimension != 1:
        raise DimensionError("mean W1 curves are one-dimensional")
    curve = []
    for step in checkpoints:
        if not 0 <= step <= traj.n_steps:
            raise RangeError(f"checkpoint {step} outside [0, {traj.n_steps}]")
        values = path_distances(traj, family, ref, int(step), threads)
        n = values.size
        stderr = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        curve.append(CurvePoint(int(step), float(traj.times[step]), float(np.mean(values)), stderr, n))
    return curve
