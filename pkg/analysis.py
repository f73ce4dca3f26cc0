"""
Reference stationary densities, theoretical rate and contraction bounds,
and empirical rate regression
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from errors import ConfigError, DomainError
from metrics import Density1D
from model import AuxFunction, CurieWeissParams

logger = logging.getLogger(__name__)


def stationary_density_cw(params: CurieWeissParams, table_size: int = 0) -> Density1D:
    """
    Symmetric invariant density of the Curie-Weiss model
    Args:
        params: Model parameters; the mean-field term vanishes at the symmetric
            invariant measure, so only beta enters
        table_size: CDF table size, 0 for the configured default
    Returns:
        Density1D proportional to exp(-2 beta (x^4 / 4 - x^2 / 2))
    """
    beta = params.beta

    def log_density(x):
        x2 = x * x
        return -2.0 * beta * (0.25 * x2 * x2 - 0.5 * x2)

    return Density1D(log_density, table_size=table_size, name=f"curie_weiss_beta{beta:g}")


@dataclass(frozen=True)
class RateBound:
    epsilon_max: float
    binding: str
    inputs: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {"epsilon_max": self.epsilon_max, "binding": self.binding, "inputs": dict(self.inputs)}


def _check_dq(d: int, q: float) -> None:
    if int(d) != d or d < 1:
        raise ConfigError(f"dimension must be a positive integer, got {d}")
    if not q > 1:
        raise ConfigError(f"moment order q must exceed 1, got {q}")


def _smallest(terms: Dict[str, float], inputs: Dict) -> RateBound:
    # Ties go to the first declared term
    label = min(terms, key=terms.get)
    value = max(terms[label], 0.0)
    if value == 0.0:
        logger.warning(f"No rate guaranteed: {label} vanishes for {inputs}")
    return RateBound(value, label, inputs)


def rate_bound_distribution(d: int, q: float) -> RateBound:
    """
    Upper end of the admissible exponents for the distribution-dependent equation
    Args:
        d: Dimension
        q: Moment order, q > 1
    Returns:
        RateBound with min{(1/d)(1 - 1/q), (1/2)(1 - 1/q)}
    """
    _check_dq(d, q)
    moment = 1.0 - 1.0 / q
    return _smallest({"dimension-term": moment / d, "half-term": 0.5 * moment}, {"d": d, "q": q})


def rate_bound_path(d: int, q: float, eta: float, fprime0: float) -> RateBound:
    """
    Upper end of the admissible exponents for the path-dependent equation
    Args:
        d: Dimension
        q: Moment order, q > 1
        eta: Interaction constant
        fprime0: f'(0) of the auxiliary function
    Returns:
        RateBound with the distribution terms and 1 - eta f'(0); zero with
        binding "interaction" when eta f'(0) >= 1
    """
    _check_dq(d, q)
    if eta < 0 or fprime0 <= 0:
        raise ConfigError(f"need eta >= 0 and f'(0) > 0, got eta={eta}, f'(0)={fprime0}")
    moment = 1.0 - 1.0 / q
    terms = {"dimension-term": moment / d, "half-term": 0.5 * moment,
             "interaction": 1.0 - eta * fprime0}
    return _smallest(terms, {"d": d, "q": q, "eta": eta, "fprime0": fprime0})


def rate_bound_weighted(d: int, q: float, eps1: float, eps2: float) -> RateBound:
    """
    Upper end of the admissible exponents for the weighted path-dependent equation
    Args:
        d: Dimension
        q: Moment order, q > 1
        eps1: Exponent of the first weight-family condition, in (0, 1]
        eps2: Exponent of the second weight-family condition, in (0, 1]
    Returns:
        RateBound with min{eps1, (eps2/d)(1 - 1/q), (eps2/2)(1 - 1/q)}
    """
    _check_dq(d, q)
    for name, value in (("eps1", eps1), ("eps2", eps2)):
        if not 0 < value <= 1:
            raise ConfigError(f"{name} must lie in (0, 1], got {value}")
    moment = 1.0 - 1.0 / q
    terms = {"epsilon1": eps1, "dimension-term": eps2 * moment / d, "half-term": 0.5 * eps2 * moment}
    return _smallest(terms, {"d": d, "q": q, "eps1": eps1, "eps2": eps2})


def markov_rate_envelope(d: int, q: float, t_hat: float) -> float:
    """
    Convergence envelope of the weighted Markov occupation measure, without constants
    Args:
        d: Dimension
        q: Moment order, q > 1
        t_hat: Effective time t^eps, must exceed e
    Returns:
        (sqrt(log t/t))^(1-1/q) for d = 1, (log t/sqrt t)^(1-1/q) for d = 2,
        ((log t)^(d-2+1/d) / t^(1/d))^(1-1/q) for d >= 3, with t = t_hat
    """
    _check_dq(d, q)
    if not t_hat > math.e:
        raise DomainError(f"effective time must exceed e, got {t_hat}")
    log_t = math.log(t_hat)
    if d == 1:
        base = math.sqrt(log_t / t_hat)
    elif d == 2:
        base = log_t / math.sqrt(t_hat)
    else:
        base = log_t ** (d - 2 + 1.0 / d) / t_hat ** (1.0 / d)
    return base ** (1.0 - 1.0 / q)


def markov_rate_envelope_at(d: int, q: float, eps: float, t: float) -> float:
    """Envelope at physical time t, with t_hat = t^eps"""
    if not 0 < eps <= 1:
        raise ConfigError(f"eps must lie in (0, 1], got {eps}")
    return markov_rate_envelope(d, q, t ** eps)


@dataclass(frozen=True)
class ContractionConstants:
    D: float
    c: float
    c_eta: float
    eta: float
    kappa_inf: float
    fprime0: float

    @classmethod
    def from_values(cls, kappa_inf: float, fprime0: float, eta: float = 0.0) -> "ContractionConstants":
        if not (kappa_inf > 0 and fprime0 > 0):
            raise ConfigError("kappa_inf and f'(0) must be positive")
        if eta < 0:
            raise ConfigError(f"eta must be nonnegative, got {eta}")
        c = 1.0 / fprime0
        return cls(D=kappa_inf * fprime0, c=c, c_eta=c - eta, eta=eta,
                   kappa_inf=kappa_inf, fprime0=fprime0)

    @property
    def admissible(self) -> bool:
        return bool(self.c_eta > 0)

    def to_dict(self) -> Dict:
        return {"D": self.D, "c": self.c, "c_eta": self.c_eta, "eta": self.eta,
                "kappa_inf": self.kappa_inf, "fprime0": self.fprime0, "admissible": self.admissible}


def contraction_constants(aux: AuxFunction, eta: float) -> ContractionConstants:
    """
    Contraction constants of the Markov semigroup and the interacting decay rate
    Args:
        aux: Auxiliary function
        eta: Interaction constant
    Returns:
        ContractionConstants with D = kappa_inf f'(0), c = 1/f'(0), c_eta = c - eta
    """
    constants = ContractionConstants.from_values(aux.kappa_inf, aux.fprime0, eta)
    if not constants.admissible:
        logger.warning(f"Interaction eta={eta} exceeds 1/f'(0)={constants.c:.6g}: no contraction")
    return constants


def _times(t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise DomainError("times must be nonnegative")
    return t


def _scalar_or_array(values: np.ndarray):
    return float(values) if values.ndim == 0 else values


def gronwall_bound_distribution(constants: ContractionConstants, w1_initial: float, t):
    """
    Bound on E W1 between the occupation measures of the interacting and Markov paths
    Args:
        constants: Contraction constants
        w1_initial: W1 between the initial law and the invariant measure
        t: Time (or array of times), t > 0
    Returns:
        kappa_inf^2 f'(0)^3 W1 / ((1 - eta f'(0)) t)
    """
    slack = 1.0 - constants.eta * constants.fprime0
    if not slack > 0:
        raise ConfigError(f"eta f'(0) = {1.0 - slack:.6g} must be below 1")
    t = np.asarray(t, dtype=np.float64)
    if np.any(t <= 0):
        raise DomainError("time must be positive")
    scale = constants.kappa_inf ** 2 * constants.fprime0 ** 3 * w1_initial / slack
    return _scalar_or_array(scale / t)


def markov_contraction_bound(constants: ContractionConstants, w1_initial: float, t):
    """W1 bound D e^(-c t) W1_0 for two copies of the frozen Markov dynamics"""
    return _scalar_or_array(constants.D * np.exp(-constants.c * _times(t)) * w1_initial)


def law_decay_bound(constants: ContractionConstants, w1_initial: float, t):
    """W1 bound kappa_inf f'(0) e^(-c_eta t) W1_0 between the law at t and the invariant measure"""
    return _scalar_or_array(constants.kappa_inf * constants.fprime0
                            * np.exp(-constants.c_eta * _times(t)) * w1_initial)


def coupling_envelope(constants: ContractionConstants, w1_initial: float, t):
    """Small-cutoff bound kappa_inf f'(0)^2 W1_0 e^(-c_eta t) on E f(|X_t - Y_t|)"""
    return _scalar_or_array(constants.kappa_inf * constants.fprime0 ** 2 * w1_initial
                            * np.exp(-constants.c_eta * _times(t)))


@dataclass(frozen=True)
class InteractionVerdict:
    admissible: bool
    margin: float
    bound: float


Constants = Union[AuxFunction, ContractionConstants]


def weighted_interaction_admissible(eta: float, aux: Constants) -> InteractionVerdict:
    """
    Strengthened weak-interaction condition of the weighted equation
    Args:
        eta: Interaction constant
        aux: Auxiliary function (or constants carrying kappa_inf and f'(0))
    Returns:
        InteractionVerdict for eta < 1 / (kappa_inf f'(0)^2)
    """
    if eta < 0:
        raise ConfigError(f"eta must be nonnegative, got {eta}")
    bound = 1.0 / (aux.kappa_inf * aux.fprime0 ** 2)
    return InteractionVerdict(bool(eta < bound), float(bound - eta), float(bound))


def lebesgue_pi1_range(eta: float, aux: Constants) -> float:
    """
    Upper end of the eps1 range for Lebesgue and discrete weights
    Returns:
        max(0, 1 - eta kappa_inf f'(0)^2)
    """
    if eta < 0:
        raise ConfigError(f"eta must be nonnegative, got {eta}")
    return max(0.0, 1.0 - eta * aux.kappa_inf * aux.fprime0 ** 2)


class LineFit(NamedTuple):
    slope: float
    intercept: float
    r_squared: float


Window = Union[slice, Tuple[int, int], None]


def _points(curve: Sequence, window: Window) -> Tuple[np.ndarray, np.ndarray]:
    pairs = [(p.t, p.mean_w1) if hasattr(p, "mean_w1") else (p[0], p[1]) for p in curve]
    data = np.asarray(pairs, dtype=np.float64).reshape(-1, 2)
    n = data.shape[0]
    if window is None:
        window = slice(min(n // 2, max(n - 3, 0)), n)
    elif isinstance(window, tuple):
        window = slice(*window)
    data = data[window]
    if data.shape[0] < 3:
        raise ConfigError(f"a fit needs at least 3 points, window holds {data.shape[0]}")
    return data[:, 0], data[:, 1]


def _fit(x: np.ndarray, y: np.ndarray) -> LineFit:
    result = stats.linregress(x, y)
    residual = y - (result.intercept + result.slope * x)
    total = float(np.sum((y - np.mean(y)) ** 2))
    # Rounding in the mean leaves ~1e-31 for a flat curve
    if total <= 1e-24 * (1.0 + float(np.sum(y ** 2))):
        return LineFit(float(result.slope), float(result.intercept), 1.0)
    r_squared = 1.0 - float(np.sum(residual ** 2)) / total
    return LineFit(float(result.slope), float(result.intercept), r_squared)


def fit_loglog_slope(curve: Sequence, window: Window = None) -> LineFit:
    """
    Least-squares fit of log(value) against log(t)
    Args:
        curve: (t, value) pairs or CurvePoint records
        window: Index range; defaults to the last half of the points
    Returns:
        LineFit(slope, intercept, r_squared)
    """
    t, values = _points(curve, window)
    if np.any(t <= 0) or np.any(values <= 0):
        raise DomainError("log-log fit needs positive times and values")
    return _fit(np.log(t), np.log(values))


def fit_loglinear_rate(curve: Sequence, window: Optional[Window] = slice(None)) -> LineFit:
    """
    Least-squares fit of log(value) against t; the slope is minus the exponential rate
    Args:
        curve: (t, value) pairs or CurvePoint records
        window: Index range; defaults to every point
    Returns:
        LineFit(slope, intercept, r_squared)
    """
    t, values = _points(curve, window)
    if np.any(values <= 0):
        raise DomainError("log-linear fit needs positive values")
    return _fit(t, np.log(values))
