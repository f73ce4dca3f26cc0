"""
Tamed Euler-Maruyama simulation of Markovian, self-interacting and
mean-field particle dynamics, plus the reflection-coupled pair

Randomness is counter based: path p of a run seeded with s draws from a
Philox generator keyed by (s, p); independent lanes of the counter space
hold the driving noise, the initial draw, the coupling's second noise and
the uniforms of its meeting rule.
Paths are scheduled in fixed blocks, so results do not depend on the
number of worker threads.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtr

from config import settings
from errors import ConfigError, DimensionError, SimulationError
from measures import RunningOccupation, WeightFamily, WeightedEmpiricalMeasure
from model import AuxFunction, DriftModel

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
LANE_NOISE = 0
LANE_INITIAL = 1
LANE_COUPLING = 2
LANE_MEETING = 3


def stream(seed: int, path: int, lane: int = LANE_NOISE) -> np.random.Generator:
    """Generator for one (seed, path, lane) stream"""
    key = np.array([seed & MASK64, path], dtype=np.uint64)
    counter = np.array([0, 0, 0, lane], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def path_rng(seed: int, path: int, step: int, dimension: int = 1, dt: float = 1.0,
             lane: int = LANE_NOISE) -> np.ndarray:
    """
    Gaussian increment of one path at one step
    Args:
        seed: Master seed
        path: Path index
        step: Step index
        dimension: Number of components
        dt: Step length; increments are N(0, dt I)
        lane: Stream lane
    Returns:
        Increment vector, identical to the one the simulators use
    """
    draws = stream(seed, path, lane).standard_normal((step + 1, dimension))
    return math.sqrt(dt) * draws[step]


class NoiseStream:
    """Buffered increments for a block of paths, refilled in chunks of steps"""

    def __init__(self, seed: int, paths: Sequence[int], dimension: int, dt: float,
                 lane: int = LANE_NOISE, enabled: bool = True, chunk: Optional[int] = None,
                 horizon: Optional[int] = None):
        self.generators = [stream(seed, p, lane) for p in paths]
        self.dimension = dimension
        self.scale = math.sqrt(dt)
        self.enabled = enabled
        self.chunk = chunk or settings.noise_chunk
        self.horizon = horizon
        self._buffer = None
        self._start = 0

    def increment(self, step: int) -> np.ndarray:
        """Increments of every path at the given step, shape (n_paths, d)"""
        if not self.enabled:
            return np.zeros((len(self.generators), self.dimension))
        if self._buffer is None or step >= self._start + self._buffer.shape[1]:
            # Draws are sequential per path, so the chunk size never changes the values
            size = self.chunk if self.horizon is None else max(1, min(self.chunk, self.horizon - step))
            self._start = step
            self._buffer = np.stack([g.standard_normal((size, self.dimension)) for g in self.generators])
        return self.scale * self._buffer[:, step - self._start]


@dataclass(frozen=True)
class InitialLaw:
    """Initial distribution: point mass, standard normal, or a custom sample list"""

    kind: str = "normal"
    point: Tuple[float, ...] = (0.0,)
    samples: Optional[Tuple[Tuple[float, ...], ...]] = None

    def __post_init__(self):
        if self.kind not in ("point", "normal", "samples"):
            raise ConfigError(f"unknown initial law {self.kind!r}")
        if self.kind == "samples" and not self.samples:
            raise ConfigError("custom initial law needs a non-empty sample list")

    @classmethod
    def point_mass(cls, point) -> "InitialLaw":
        return cls("point", point=tuple(np.atleast_1d(np.asarray(point, dtype=float)).tolist()))

    def draw(self, seed: int, paths: Sequence[int], dimension: int) -> np.ndarray:
        """Initial states of the given paths, shape (len(paths), d)"""
        if self.kind == "point":
            point = np.asarray(self.point, dtype=np.float64)
            if point.shape != (dimension,):
                raise DimensionError(f"initial point has {point.size} components, model has {dimension}")
            return np.tile(point, (len(paths), 1))
        if self.kind == "normal":
            return np.stack([stream(seed, p, LANE_INITIAL).standard_normal(dimension) for p in paths])
        samples = np.asarray(self.samples, dtype=np.float64).reshape(len(self.samples), -1)
        if samples.shape[1] != dimension:
            raise DimensionError(f"initial samples are {samples.shape[1]}-dimensional, model is {dimension}")
        return samples[[p % samples.shape[0] for p in paths]]

    def to_dict(self) -> Dict:
        if self.kind == "point":
            return {"kind": "point", "point": list(self.point)}
        if self.kind == "samples":
            return {"kind": "samples", "n": len(self.samples)}
        return {"kind": "normal"}


@dataclass(frozen=True)
class SchemeConfig:
    dt: float
    n_steps: int
    n_paths: int
    n0: float = 10_000.0
    alpha: float = 0.1
    seed: int = 0
    initial: InitialLaw = field(default_factory=InitialLaw)
    noise: bool = True  # False switches the Brownian increments off (testing hook)

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1 or self.n_paths < 1:
            raise ConfigError("n_steps and n_paths must be positive")
        if not 0 < self.alpha <= 0.5:
            raise ConfigError(f"alpha must lie in (0, 1/2], got {self.alpha}")
        if not self.n0 >= 1:
            raise ConfigError(f"n0 must be at least 1, got {self.n0}")

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    @property
    def drift_cap(self) -> float:
        """n0^alpha, the bound on tamed drift norms"""
        return self.n0 ** self.alpha

    def to_dict(self) -> Dict:
        return {"dt": self.dt, "n_steps": self.n_steps, "n_paths": self.n_paths, "n0": self.n0,
                "alpha": self.alpha, "seed": self.seed, "initial": self.initial.to_dict(),
                "noise": self.noise}


@dataclass(frozen=True)
class TrajectorySet:
    """N paths on a shared grid t_k = k dt, states of shape (N, n_steps + 1, d)"""

    times: np.ndarray
    states: np.ndarray
    seed: int
    stream_ids: np.ndarray
    meta: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.states.ndim != 3 or self.states.shape[1] != self.times.shape[0]:
            raise DimensionError("states must have shape (n_paths, n_steps + 1, d)")
        self.times.setflags(write=False)
        self.states.setflags(write=False)

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def n_steps(self) -> int:
        return self.states.shape[1] - 1

    @property
    def dimension(self) -> int:
        return self.states.shape[2]

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def at_step(self, step: int) -> np.ndarray:
        """States of every path at a grid step, shape (N, d)"""
        return self.states[:, step]

    def ensemble_measure(self, step: int) -> WeightedEmpiricalMeasure:
        """Equal-weight measure of the ensemble at a grid step"""
        return WeightedEmpiricalMeasure.uniform(self.states[:, step])


def tame(b_value, n0: float, alpha: float) -> np.ndarray:
    """
    Tamed drift b / (1 + n0^(-alpha) |b|)
    Args:
        b_value: Drift vector (or a batch of row vectors)
        n0: Taming size, n0 >= 1
        alpha: Taming exponent in (0, 1/2]
    Returns:
        Tamed drift with norm below n0^alpha
    """
    b = np.asarray(b_value, dtype=np.float64)
    if b.ndim <= 1:
        return _tame_rows(np.atleast_1d(b).reshape(1, -1), n0, alpha)[0].reshape(b.shape)
    return _tame_rows(b, n0, alpha)


def _row_norms(b: np.ndarray) -> np.ndarray:
    if b.shape[1] == 1:
        return np.abs(b[:, 0])
    return np.linalg.norm(b, axis=1)


def _tame_rows(b: np.ndarray, n0: float, alpha: float) -> np.ndarray:
    damping = 1.0 + n0 ** (-alpha) * _row_norms(b)
    return b / damping[:, None]


def reflection_matrix(e: np.ndarray) -> np.ndarray:
    """I - 2 e e^T"""
    e = np.asarray(e, dtype=np.float64)
    return np.eye(e.size) - 2.0 * np.outer(e, e)


def cutoff_lambda(r, delta: float) -> np.ndarray:
    """
    Smooth cutoff: 0 on [0, delta/2], 1 on [delta, inf), quintic C2 bridge between
    """
    u = np.clip((np.asarray(r, dtype=np.float64) - 0.5 * delta) / (0.5 * delta), 0.0, 1.0)
    return u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)


def cutoff_pi(r, delta: float) -> np.ndarray:
    lam = cutoff_lambda(r, delta)
    return np.sqrt(np.maximum(1.0 - lam * lam, 0.0))


def coupled_noise(xi: np.ndarray, xi_hat: np.ndarray, gap: np.ndarray,
                  delta: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Noise pair of the reflection coupling for a batch of paths
    Args:
        xi: Shared increments, shape (n, d)
        xi_hat: Independent increments, shape (n, d)
        gap: X - Y per path, shape (n, d)
        delta: Cutoff radius
    Returns:
        Tuple of (X noise, Y noise); e = gap / |gap| and e = 0 at zero gap
    """
    r = _row_norms(gap)
    e = np.zeros_like(gap)
    moving = r > 0
    e[moving] = gap[moving] / r[moving, None]
    lam = cutoff_lambda(r, delta)[:, None]
    pi = cutoff_pi(r, delta)[:, None]
    reflected = xi - 2.0 * e * np.sum(e * xi, axis=1, keepdims=True)
    return lam * xi + pi * xi_hat, lam * reflected + pi * xi_hat


def meeting_mask(gap: np.ndarray, new_gap: np.ndarray, delta: float, dt: float,
                 uniforms: np.ndarray) -> np.ndarray:
    """
    Pairs whose gap hit zero during one coupled step
    Args:
        gap: X - Y before the step, shape (n, d)
        new_gap: X - Y after the step
        delta: Cutoff radius
        dt: Step length; 0 when the step carries no noise
        uniforms: One U(0, 1) draw per pair
    Returns:
        Boolean mask: the component of the new gap along the old direction
        is nonpositive, or a Brownian bridge of variance 4 lambda^2 dt
        between the two endpoints crossed zero (probability
        exp(-2 r0 r1 / variance), compared with the uniform draw)
    """
    r = _row_norms(gap)
    moving = r > 0
    e = np.zeros_like(gap)
    e[moving] = gap[moving] / r[moving, None]
    along = np.sum(e * new_gap, axis=1)
    crossed = moving & (along <= 0)

    variance = 4.0 * cutoff_lambda(r, delta) ** 2 * dt
    bridge = moving & ~crossed & (variance > 0)
    p = np.zeros_like(r)
    p[bridge] = np.exp(-2.0 * r[bridge] * along[bridge] / variance[bridge])
    return crossed | (np.asarray(uniforms) < p)


def _blocks(n_paths: int, block_size: Optional[int] = None) -> List[range]:
    size = block_size or settings.block_size
    return [range(s, min(s + size, n_paths)) for s in range(0, n_paths, size)]


def _map_blocks(fn, n_paths: int, threads: Optional[int]) -> List:
    threads = settings.threads if threads is None else threads
    blocks = _blocks(n_paths)
    logger.debug(f"Scheduling {len(blocks)} blocks on {threads} thread(s)")
    if threads <= 1 or len(blocks) == 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, blocks))


def _check_finite(states: np.ndarray, paths: range, label: str) -> None:
    bad = ~np.all(np.isfinite(states), axis=(1, 2))
    if np.any(bad):
        first = paths[int(np.argmax(bad))]
        raise SimulationError(f"{label}: non-finite state on path {first}")


def _assemble(cfg: SchemeConfig, parts: List[np.ndarray], label: str, meta: Dict) -> TrajectorySet:
    times = np.arange(cfg.n_steps + 1) * cfg.dt
    return TrajectorySet(times=times, states=np.concatenate(parts, axis=0), seed=cfg.seed,
                         stream_ids=np.arange(cfg.n_paths),
                         meta={"scheme": label, **cfg.to_dict(), **meta})


def simulate_markov(model: DriftModel, frozen_measure: WeightedEmpiricalMeasure, cfg: SchemeConfig,
                    threads: Optional[int] = None) -> TrajectorySet:
    """
    Tamed Euler scheme for dY = b(Y, mu) dt + dB with a frozen measure mu
    Args:
        model: Drift model
        frozen_measure: Measure argument held fixed along the run
        cfg: Scheme configuration
        threads: Worker threads
    Returns:
        TrajectorySet
    """
    d = model.dimension
    if frozen_measure.dimension != d:
        raise DimensionError(f"frozen measure is {frozen_measure.dimension}-dimensional, model is {d}")
    frozen_mean = frozen_measure.mean()

    def run(paths: range) -> np.ndarray:
        states = np.empty((len(paths), cfg.n_steps + 1, d))
        x = cfg.initial.draw(cfg.seed, paths, d)
        states[:, 0] = x
        noise = NoiseStream(cfg.seed, paths, d, cfg.dt, enabled=cfg.noise, horizon=cfg.n_steps)
        means = np.tile(frozen_mean, (len(paths), 1))
        for k in range(cfg.n_steps):
            if model.uses_mean_only:
                b = model.batch_drift(x, means)
            else:
                b = np.stack([model(row, frozen_measure) for row in x])
            x = x + _tame_rows(b, cfg.n0, cfg.alpha) * cfg.dt + noise.increment(k)
            states[:, k + 1] = x
        _check_finite(states, paths, "markov")
        return states

    return _assemble(cfg, _map_blocks(run, cfg.n_paths, threads), "markov",
                     {"model": model.describe()})


def simulate_self_interacting(model: DriftModel, family: WeightFamily, cfg: SchemeConfig,
                              threads: Optional[int] = None) -> TrajectorySet:
    """
    Tamed Euler scheme for dZ = b(Z, E_t^w(Z)) dt + dB

    Step k uses the path's own occupation measure over Z_0..Z_k (for
    lebesgue the equal weights 1/(k+1)) and adds the previous state:
    Z_{k+1} = Z_k + tame(b_k) dt + xi_k.
    Args:
        model: Drift model
        family: Weight family of the occupation measure in the drift
        cfg: Scheme configuration
        threads: Worker threads
    Returns:
        TrajectorySet
    """
    d = model.dimension

    def run(paths: range) -> np.ndarray:
        states = np.empty((len(paths), cfg.n_steps + 1, d))
        x = cfg.initial.draw(cfg.seed, paths, d)
        states[:, 0] = x
        noise = NoiseStream(cfg.seed, paths, d, cfg.dt, enabled=cfg.noise, horizon=cfg.n_steps)
        occupation = RunningOccupation(family, len(paths), d, cfg.dt,
                                       keep_history=not model.uses_mean_only)
        for k in range(cfg.n_steps):
            means = occupation.update(k, x)
            if model.uses_mean_only:
                b = model.batch_drift(x, means)
            else:
                b = np.stack([model(row, occupation.measure(i)) for i, row in enumerate(x)])
            x = x + _tame_rows(b, cfg.n0, cfg.alpha) * cfg.dt + noise.increment(k)
            states[:, k + 1] = x
        _check_finite(states, paths, "self-interacting")
        return states

    return _assemble(cfg, _map_blocks(run, cfg.n_paths, threads), "self_interacting",
                     {"model": model.describe(), "weights": family.to_dict()})


def simulate_mckean_particles(model: DriftModel, cfg: SchemeConfig,
                              threads: Optional[int] = None) -> TrajectorySet:
    """
    Mean-field particle system: every particle sees the ensemble measure of step k
    Args:
        model: Drift model
        cfg: Scheme configuration (n_paths >= 2 particles)
        threads: Worker threads for drifts that need the whole measure
    Returns:
        TrajectorySet with one path per particle
    """
    if cfg.n_paths < 2:
        raise ConfigError("a particle system needs at least two particles")
    d = model.dimension
    paths = range(cfg.n_paths)
    states = np.empty((cfg.n_paths, cfg.n_steps + 1, d))
    x = cfg.initial.draw(cfg.seed, paths, d)
    states[:, 0] = x
    noise = NoiseStream(cfg.seed, paths, d, cfg.dt, enabled=cfg.noise, horizon=cfg.n_steps)
    threads = settings.threads if threads is None else threads

    for k in range(cfg.n_steps):
        # Snapshot of the step-k ensemble; every particle update reads it
        if model.uses_mean_only:
            means = np.tile(np.mean(x, axis=0), (cfg.n_paths, 1))
            b = model.batch_drift(x, means)
        else:
            ensemble = WeightedEmpiricalMeasure.uniform(x)
            drift_block = lambda block: np.stack([model(x[i], ensemble) for i in block])
            b = np.concatenate(_map_blocks(drift_block, cfg.n_paths, threads), axis=0)
        x = x + _tame_rows(b, cfg.n0, cfg.alpha) * cfg.dt + noise.increment(k)
        states[:, k + 1] = x

    _check_finite(states, paths, "mckean particles")
    return _assemble(cfg, [states], "mckean_particles", {"model": model.describe()})


BatchDrift = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class CouplingConfig:
    delta: float
    scheme: SchemeConfig
    initial_b: Optional[InitialLaw] = None  # law of the second marginal; defaults to scheme.initial
    coalesce: bool = True  # Y jumps onto X once the gap crosses zero within a step

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ConfigError(f"cutoff radius must lie in (0, 1), got {self.delta}")


@dataclass(frozen=True)
class CouplingResult:
    x: TrajectorySet
    y: TrajectorySet
    mean_gap: np.ndarray
    mean_f_gap: Optional[np.ndarray] = None

    @property
    def times(self) -> np.ndarray:
        return self.x.times


def simulate_reflection_coupling(drift_a: BatchDrift, drift_b: BatchDrift, cc: CouplingConfig,
                                 dimension: int = 1, aux: Optional[AuxFunction] = None,
                                 threads: Optional[int] = None) -> CouplingResult:
    """
    Reflection coupling of two diffusions driven by shared, reflected noise
    Args:
        drift_a: Batched drift (x of shape (n, d), t) of the first diffusion
        drift_b: Batched drift of the second diffusion
        cc: Coupling configuration
        dimension: State dimension d
        aux: Auxiliary function; enables the E f(|gap|) curve
        threads: Worker threads
    Returns:
        CouplingResult with both trajectory sets and per-step ensemble
        averages of |X - Y| (and f(|X - Y|))
    """
    cfg = cc.scheme
    d = dimension
    law_b = cc.initial_b or cfg.initial

    def run(paths: range):
        xs = np.empty((len(paths), cfg.n_steps + 1, d))
        ys = np.empty_like(xs)
        x = cfg.initial.draw(cfg.seed, paths, d)
        y = law_b.draw(cfg.seed, paths, d)
        if x.shape != y.shape:
            raise DimensionError("coupled diffusions have different dimensions")
        xs[:, 0], ys[:, 0] = x, y
        shared = NoiseStream(cfg.seed, paths, d, cfg.dt, LANE_NOISE, enabled=cfg.noise, horizon=cfg.n_steps)
        private = NoiseStream(cfg.seed, paths, d, cfg.dt, LANE_COUPLING, enabled=cfg.noise, horizon=cfg.n_steps)
        meeting = NoiseStream(cfg.seed, paths, 1, 1.0, LANE_MEETING, enabled=cfg.noise, horizon=cfg.n_steps)
        bridge_dt = cfg.dt if cfg.noise else 0.0
        for k in range(cfg.n_steps):
            t = k * cfg.dt
            ba, bb = np.asarray(drift_a(x, t)), np.asarray(drift_b(y, t))
            if ba.shape != x.shape or bb.shape != y.shape:
                raise DimensionError(f"drifts must return shape {x.shape}")
            gap = x - y
            noise_x, noise_y = coupled_noise(shared.increment(k), private.increment(k), gap, cc.delta)
            x = x + _tame_rows(ba, cfg.n0, cfg.alpha) * cfg.dt + noise_x
            y = y + _tame_rows(bb, cfg.n0, cfg.alpha) * cfg.dt + noise_y
            if cc.coalesce:
                # Met pairs sit at zero gap, where the cutoff hands both copies the same noise
                met = meeting_mask(gap, x - y, cc.delta, bridge_dt, ndtr(meeting.increment(k)[:, 0]))
                y[met] = x[met]
            xs[:, k + 1], ys[:, k + 1] = x, y
        _check_finite(xs, paths, "coupling X")
        _check_finite(ys, paths, "coupling Y")
        return xs, ys

    parts = _map_blocks(run, cfg.n_paths, threads)
    meta = {"delta": cc.delta, "coalesce": cc.coalesce, "initial_b": law_b.to_dict()}
    x_set = _assemble(cfg, [p[0] for p in parts], "coupling_x", meta)
    y_set = _assemble(cfg, [p[1] for p in parts], "coupling_y", meta)

    gaps = np.linalg.norm(x_set.states - y_set.states, axis=2)
    mean_gap = np.mean(gaps, axis=0)
    mean_f_gap = np.mean(aux.value(gaps), axis=0) if aux is not None else None
    return CouplingResult(x_set, y_set, mean_gap, mean_f_gap)
