"""
Weighted empirical (occupation) measures, weight families on [0, 1] and the
singular-moment integrals that decide which weight families are admissible
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from config import settings
from errors import ConfigError, DimensionError, DomainError, RangeError

logger = logging.getLogger(__name__)

MERGE_TOL = 1e-12
MASS_TOL = 1e-12
# Grid times are products k * dt; this absorbs their rounding when compared to k * tau
GRID_TOL = 1e-9


@dataclass(frozen=True)
class WeightedEmpiricalMeasure:
    """Finite support points in R^d with nonnegative weights summing to one"""

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        support = np.array(self.support, dtype=np.float64)
        if support.ndim == 1:
            support = support.reshape(-1, 1)
        weights = np.array(self.weights, dtype=np.float64).reshape(-1)

        if support.ndim != 2 or support.shape[0] == 0:
            raise DimensionError("support must be a non-empty (n, d) array")
        if support.shape[0] != weights.shape[0]:
            raise DimensionError(
                f"support has {support.shape[0]} points but {weights.shape[0]} weights"
            )
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ConfigError("weights must be finite and nonnegative")
        if abs(weights.sum() - 1.0) > MASS_TOL:
            raise ConfigError(f"weights sum to {weights.sum()!r}, expected 1")

        support.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def dirac(cls, point) -> "WeightedEmpiricalMeasure":
        """Point mass at a single location"""
        return cls(np.atleast_1d(np.asarray(point, dtype=np.float64)).reshape(1, -1), [1.0])

    @classmethod
    def uniform(cls, points) -> "WeightedEmpiricalMeasure":
        """Equal weights on the given points (one point per row, or a 1-D array)"""
        points = np.asarray(points, dtype=np.float64)
        n = points.shape[0]
        return cls(points, np.full(n, 1.0 / n))

    @property
    def dimension(self) -> int:
        return self.support.shape[1]

    @property
    def size(self) -> int:
        return self.support.shape[0]

    def mean(self) -> np.ndarray:
        """First moment, shape (d,)"""
        return self.weights @ self.support

    def shifted(self, offset) -> "WeightedEmpiricalMeasure":
        """Translate every support point by offset"""
        return WeightedEmpiricalMeasure(self.support + np.asarray(offset, dtype=np.float64), self.weights)

    def merged(self, tol: float = MERGE_TOL) -> "WeightedEmpiricalMeasure":
        """
        Canonical form: sorted support, points closer than tol merged
        Args:
            tol: Merge distance (max-norm between consecutive sorted points)
        Returns:
            Measure with summed weights on merged points
        """
        order = np.lexsort(self.support.T[::-1])
        support = self.support[order]
        weights = self.weights[order]
        if support.shape[0] == 1:
            return WeightedEmpiricalMeasure(support, weights)

        gaps = np.max(np.abs(np.diff(support, axis=0)), axis=1)
        starts = np.concatenate(([0], np.nonzero(gaps > tol)[0] + 1))
        return WeightedEmpiricalMeasure(support[starts], np.add.reduceat(weights, starts))

    def same_as(self, other: "WeightedEmpiricalMeasure", tol: float = MERGE_TOL) -> bool:
        """Equality of merged canonical forms"""
        a, b = self.merged(), other.merged()
        return (
            a.size == b.size
            and a.dimension == b.dimension
            and np.allclose(a.support, b.support, rtol=0.0, atol=tol)
            and np.allclose(a.weights, b.weights, rtol=0.0, atol=MASS_TOL)
        )


class WeightKind(str, Enum):
    LEBESGUE = "lebesgue"
    DISCRETE = "discrete"
    POWER = "power"


@dataclass(frozen=True)
class WeightFamily:
    """
    A family t -> w_t of probability measures on [0, 1]

    lebesgue and power(gamma) are densities (gamma + 1) s^gamma (lebesgue is
    gamma = 0); discrete(tau) puts mass 1/n on k tau / t, k = 1..n,
    n = floor(t / tau), and a point mass at 0 while t < tau.
    """

    kind: WeightKind = WeightKind.LEBESGUE
    tau: Optional[float] = None
    gamma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", WeightKind(self.kind))
        if self.kind == WeightKind.DISCRETE:
            if self.tau is None or not self.tau > 0:
                raise ConfigError("discrete weight family needs tau > 0")
        elif self.tau is not None:
            raise ConfigError(f"tau is only meaningful for the discrete family, got kind={self.kind.value}")
        if self.kind == WeightKind.POWER and not self.gamma >= 0:
            raise ConfigError("power weight family needs gamma >= 0")
        if self.kind == WeightKind.LEBESGUE and self.gamma != 0.0:
            raise ConfigError("lebesgue family has gamma = 0")

    @classmethod
    def lebesgue(cls) -> "WeightFamily":
        return cls(WeightKind.LEBESGUE)

    @classmethod
    def discrete(cls, tau: float) -> "WeightFamily":
        return cls(WeightKind.DISCRETE, tau=tau)

    @classmethod
    def power(cls, gamma: float) -> "WeightFamily":
        return cls(WeightKind.POWER, gamma=gamma)

    @property
    def is_atomic(self) -> bool:
        return self.kind == WeightKind.DISCRETE

    @property
    def exponent(self) -> float:
        """gamma + 1 for the density kinds"""
        return self.gamma + 1.0

    def to_dict(self) -> Dict:
        if self.kind == WeightKind.DISCRETE:
            return {"kind": self.kind.value, "tau": self.tau}
        if self.kind == WeightKind.POWER:
            return {"kind": self.kind.value, "gamma": self.gamma}
        return {"kind": self.kind.value}

    def n_atoms(self, t: float) -> int:
        """floor(t / tau) for the discrete family"""
        return int(math.floor(t / self.tau + GRID_TOL))

    def atoms(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """
        Atom positions in [0, 1] and masses of w_t (discrete family only)
        Args:
            t: Time, t >= 0
        Returns:
            Tuple of (positions, masses)
        """
        if not self.is_atomic:
            raise ConfigError(f"{self.kind.value} family is a density, not atoms")
        if t < 0:
            raise DomainError(f"t must be nonnegative, got {t}")
        n = self.n_atoms(t)
        if n == 0:
            return np.zeros(1), np.ones(1)
        positions = np.arange(1, n + 1) * self.tau / t
        return np.minimum(positions, 1.0), np.full(n, 1.0 / n)

    def density(self, s) -> np.ndarray:
        """Density of w_t on [0, 1] (density kinds, independent of t)"""
        if self.is_atomic:
            raise ConfigError("discrete family has no density")
        s = np.asarray(s, dtype=np.float64)
        return self.exponent * np.power(s, self.gamma)

    def cdf(self, s) -> np.ndarray:
        """w_t([0, s]) for the density kinds"""
        if self.is_atomic:
            raise ConfigError("discrete family has no density")
        s = np.clip(np.asarray(s, dtype=np.float64), 0.0, 1.0)
        if self.kind == WeightKind.LEBESGUE:
            return s
        return np.power(s, self.exponent)

    def total_mass(self, t: float) -> float:
        """Mass of w_t; 1 for every valid t"""
        if self.is_atomic:
            return float(self.atoms(t)[1].sum())
        return float(self.cdf(1.0) - self.cdf(0.0))


def _state_index(times: np.ndarray, when: float) -> int:
    """Index of the latest grid time not after `when`"""
    scale = max(1.0, abs(when))
    return int(np.searchsorted(times, when + GRID_TOL * scale, side="right") - 1)


def occupation_measure(times: np.ndarray, states: np.ndarray, family: WeightFamily,
                       t: float) -> WeightedEmpiricalMeasure:
    """
    Weighted occupation measure of one path over [0, t]
    Args:
        times: Time grid, shape (n + 1,), starting at 0
        states: Path states on the grid, shape (n + 1, d) or (n + 1,)
        family: Weight family w
        t: Horizon, at most times[-1]
    Returns:
        Merged measure integrating delta_{Z_{ts}} against w_t(ds)
    """
    times = np.asarray(times, dtype=np.float64)
    states = np.asarray(states, dtype=np.float64)
    if states.ndim == 1:
        states = states.reshape(-1, 1)
    if states.shape[0] != times.shape[0]:
        raise DimensionError("states and time grid have different lengths")
    if t > times[-1] * (1.0 + GRID_TOL) + GRID_TOL:
        raise RangeError(f"t={t} exceeds path horizon {times[-1]}")

    if family.is_atomic:
        if t < 0:
            raise DomainError(f"t must be nonnegative, got {t}")
        n = family.n_atoms(t)
        if n == 0:
            return WeightedEmpiricalMeasure.dirac(states[0])
        idx = [_state_index(times, k * family.tau) for k in range(1, n + 1)]
        return WeightedEmpiricalMeasure(states[idx], np.full(n, 1.0 / n)).merged()

    if not t > 0:
        raise DomainError(f"t must be positive for the {family.kind.value} family, got {t}")
    # Left-endpoint rule: the mass of each step [t_j, t_{j+1}] sits on Z_{t_j}
    n_cells = int(np.searchsorted(times, t * (1.0 - GRID_TOL), side="left"))
    n_cells = max(n_cells, 1)
    edges = np.append(times[:n_cells], t) / t
    masses = np.diff(family.cdf(edges))
    masses = masses / masses.sum()
    return WeightedEmpiricalMeasure(states[:n_cells], masses).merged()


def pi1_integral(family: WeightFamily, t: float, eps: float) -> float:
    """
    Singular moment of w_t: integral of s^(-eps) w_t(ds)
    Args:
        family: Weight family
        t: Time, t > 0
        eps: Exponent in (0, 1]
    Returns:
        Integral value, +inf when it diverges
    """
    if not t > 0:
        raise DomainError(f"t must be positive, got {t}")
    if family.is_atomic:
        positions, masses = family.atoms(t)
        if np.any(positions <= 0):
            return math.inf
        return float(masses @ np.power(positions, -eps))

    a = family.exponent - eps
    if a <= 0:
        return math.inf
    return family.exponent / a


@dataclass(frozen=True)
class Pi1Verdict:
    admissible: bool
    margin: float
    bound: float
    worst_integral: float
    probe_times: Tuple[float, ...] = field(default_factory=tuple)


def pi1_admissible(family: WeightFamily, eps: float, eta: float, kappa_inf: float,
                   fprime0: float, probe_times: Optional[Sequence[float]] = None) -> Pi1Verdict:
    """
    Check the first admissibility class on a finite probe grid
    Args:
        family: Weight family
        eps: Exponent in (0, 1]
        eta: Interaction constant
        kappa_inf: Limit of the dissipativity profile
        fprime0: f'(0) of the auxiliary function
        probe_times: Times standing in for the limsup
    Returns:
        Pi1Verdict with margin = bound - worst integral
    """
    if eta < 0 or not kappa_inf > 0 or not fprime0 > 0:
        raise ConfigError("eta must be nonnegative; kappa_inf and f'(0) positive")
    probes = tuple(probe_times or settings.probe_times)
    product = eta * kappa_inf * fprime0 ** 2
    bound = math.inf if product == 0 else 1.0 / product
    worst = max(pi1_integral(family, t, eps) for t in probes)
    margin = bound - worst if math.isfinite(worst) else -math.inf
    return Pi1Verdict(admissible=bool(worst < bound), margin=margin, bound=bound,
                      worst_integral=worst, probe_times=probes)


def _capped_kernel(cap: float, eps: float):
    def kernel(u):
        u = np.abs(u)
        with np.errstate(divide="ignore"):
            return np.minimum(cap, np.where(u > 0, np.power(u, -eps), np.inf))
    return kernel


def pi2_integrals(family: WeightFamily, t: float, eps: float) -> Tuple[float, float]:
    """
    Capped singular integrals of the second admissibility class
    Args:
        family: Weight family
        t: Time, t > 0
        eps: Exponent in (0, 1]
    Returns:
        Tuple of (single, double) where single integrates min(t^eps, s^-eps)
        against w_t and double integrates min(t^eps, |s1 - s2|^-eps)
        against w_t x w_t
    """
    if not t > 0:
        raise DomainError(f"t must be positive, got {t}")
    cap = t ** eps
    kernel = _capped_kernel(cap, eps)

    if family.is_atomic:
        positions, masses = family.atoms(t)
        single = float(masses @ kernel(positions))
        pairwise = kernel(positions[:, None] - positions[None, :])
        return single, float(masses @ pairwise @ masses)

    # Density kinds: the cap switches on below s0 = 1/t
    g = family.exponent
    s0 = min(1.0, 1.0 / t)
    a = g - eps
    if a == 0:
        tail = -g * math.log(s0)
    else:
        tail = g / a * (1.0 - s0 ** a)
    single = cap * s0 ** g + tail

    # Symmetric double integral: 2 * int_0^1 p(s1) int_0^s1 k(s1 - s2) p(s2) ds2 ds1
    def inner(s1):
        brk = s1 - s0
        pts = [brk] if 0.0 < brk < s1 else None
        value, _ = integrate.quad(lambda s2: kernel(s1 - s2) * family.density(s2), 0.0, s1,
                                  points=pts, limit=200, epsabs=1e-12, epsrel=1e-10)
        return value * family.density(s1)

    outer_pts = [s0] if 0.0 < s0 < 1.0 else None
    double, _ = integrate.quad(inner, 0.0, 1.0, points=outer_pts, limit=200,
                               epsabs=1e-12, epsrel=1e-10)
    return single, 2.0 * double


@dataclass(frozen=True)
class Pi2Verdict:
    admissible: bool
    sup_single: float
    sup_double: float
    probe_times: Tuple[float, ...]


def pi2_admissible(family: WeightFamily, eps: float,
                   probe_times: Optional[Sequence[float]] = None,
                   increment_ratio: float = 0.95) -> Pi2Verdict:
    """
    Finite-probe surrogate for membership in the second admissibility class

    Both capped integrals must be finite on the probe grid and their growth
    over the last two probe intervals must shrink (increment ratio below
    `increment_ratio`); logarithmic growth keeps a constant ratio and fails.
    """
    probes = tuple(sorted(probe_times or settings.probe_times))
    if len(probes) < 3:
        raise ConfigError("pi2 admissibility needs at least three probe times")
    values = np.array([pi2_integrals(family, t, eps) for t in probes])

    def settles(column: np.ndarray) -> bool:
        if not np.all(np.isfinite(column)):
            return False
        d1 = column[-2] - column[-3]
        d2 = column[-1] - column[-2]
        if d2 <= 1e-12 * (1.0 + abs(column[-1])):
            return True
        return bool(d1 > 0 and d2 <= increment_ratio * d1)

    ok = settles(values[:, 0]) and settles(values[:, 1])
    return Pi2Verdict(admissible=bool(ok), sup_single=float(values[:, 0].max()),
                      sup_double=float(values[:, 1].max()), probe_times=probes)


class RunningOccupation:
    """
    Occupation state of a batch of paths inside a simulation

    At step k the measure uses the grid states Z_0..Z_k. Density families
    weight Z_j by w([j/(k+1), (j+1)/(k+1)]), which for lebesgue is the equal
    weight 1/(k+1); the discrete family keeps Z_{i tau} for i tau <= k dt.
    Weighted means are maintained in O(1) per step; the full history is kept
    only when `keep_history` is set (drifts that need the whole measure).
    """

    def __init__(self, family: WeightFamily, n_paths: int, dimension: int, dt: float,
                 keep_history: bool = False):
        self.family = family
        self.dt = dt
        self.keep_history = keep_history
        self._sum = np.zeros((n_paths, dimension))
        self._first: Optional[np.ndarray] = None
        self._count = 0
        self._next_atom = 1
        self._history: List[np.ndarray] = []
        self._atom_steps: List[int] = []
        self._step = -1

    def _atom_step(self, i: int) -> int:
        return int(math.floor(i * self.family.tau / self.dt + GRID_TOL))

    def update(self, k: int, z: np.ndarray) -> np.ndarray:
        """
        Record the states at step k
        Args:
            k: Step index, called with k = 0, 1, 2, ...
            z: States of the batch at step k, shape (n_paths, d)
        Returns:
            Weighted means of the step-k occupation measures, shape (n_paths, d)
        """
        if k != self._step + 1:
            raise ConfigError(f"occupation updates must be sequential, got step {k}")
        self._step = k
        if k == 0:
            self._first = z.copy()
        if self.keep_history:
            self._history.append(z.copy())

        if self.family.kind == WeightKind.LEBESGUE:
            self._sum += z
            return self._sum / (k + 1)

        if self.family.kind == WeightKind.POWER:
            g = self.family.exponent
            self._sum += ((k + 1) ** g - k ** g) * z
            return self._sum / (k + 1) ** g

        while self._atom_step(self._next_atom) == k:
            self._sum += z
            self._count += 1
            self._atom_steps.append(k)
            self._next_atom += 1
        if self._count == 0:
            return self._first.copy()
        return self._sum / self._count

    def measure(self, path: int) -> WeightedEmpiricalMeasure:
        """Full occupation measure of one path at the current step (needs history)"""
        if not self.keep_history:
            raise ConfigError("occupation history was not kept")
        k = self._step
        if self.family.is_atomic:
            if self._count == 0:
                return WeightedEmpiricalMeasure.dirac(self._history[0][path])
            points = np.array([self._history[j][path] for j in self._atom_steps])
            return WeightedEmpiricalMeasure(points, np.full(len(points), 1.0 / len(points)))
        points = np.array([h[path] for h in self._history])
        edges = np.arange(k + 2) / (k + 1)
        masses = np.diff(self.family.cdf(edges))
        return WeightedEmpiricalMeasure(points, masses / masses.sum())
