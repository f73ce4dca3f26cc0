"""
Tests for rate bounds, contraction constants and slope fits
"""

import math

import numpy as np
import pytest

from analysis import (ContractionConstants, coupling_envelope, contraction_constants, fit_loglinear_rate,
                      fit_loglog_slope, gronwall_bound_distribution, law_decay_bound, lebesgue_pi1_range,
                      markov_contraction_bound, markov_rate_envelope, markov_rate_envelope_at,
                      rate_bound_distribution, rate_bound_path, rate_bound_weighted, stationary_density_cw,
                      weighted_interaction_admissible)
from errors import ConfigError, DomainError
from metrics import CurvePoint
from model import CurieWeissParams, build_aux_function


def test_rate_bound_distribution():
    bound = rate_bound_distribution(1, 2.0)
    assert bound.epsilon_max == pytest.approx(0.25)
    assert bound.binding == "half-term"

    bound = rate_bound_distribution(3, 2.0)
    assert bound.epsilon_max == pytest.approx(1.0 / 6.0)
    assert bound.binding == "dimension-term"

    assert rate_bound_distribution(1, 1.0001).epsilon_max < 1e-4


def test_rate_bound_path():
    assert rate_bound_path(1, 2.0, 0.5, 1.0).epsilon_max == pytest.approx(0.25)

    bound = rate_bound_path(1, 2.0, 0.9, 1.0)
    assert bound.epsilon_max == pytest.approx(0.1)
    assert bound.binding == "interaction"

    boundary = rate_bound_path(1, 2.0, 0.5, 2.0)
    assert boundary.epsilon_max == 0.0
    assert boundary.binding == "interaction"


def test_rate_bound_weighted():
    assert rate_bound_weighted(1, 2.0, 0.3, 1.0).epsilon_max == pytest.approx(0.25)

    tiny = rate_bound_weighted(1, 2.0, 1e-6, 1.0)
    assert tiny.epsilon_max == pytest.approx(1e-6)
    assert tiny.binding == "epsilon1"

    tie = rate_bound_weighted(2, 3.0, 1.0, 0.6)
    assert tie.epsilon_max == pytest.approx(0.2)
    assert tie.binding == "dimension-term"


@pytest.mark.parametrize("d", [1, 2, 3, 5])
@pytest.mark.parametrize("q", [1.5, 2.0, 4.0])
def test_rate_bound_relations(d, q):
    """The interaction term only shrinks the bound; eps1 = eps2 = 1 recovers the distribution case"""
    for eta_f in (0.0, 0.3, 0.8):
        assert rate_bound_path(d, q, eta_f, 1.0).epsilon_max <= rate_bound_distribution(d, q).epsilon_max
    assert rate_bound_weighted(d, q, 1.0, 1.0).epsilon_max == pytest.approx(
        min(rate_bound_distribution(d, q).epsilon_max, 1.0))


def test_rate_bound_errors():
    with pytest.raises(ConfigError):
        rate_bound_distribution(1, 1.0)
    with pytest.raises(ConfigError):
        rate_bound_distribution(0, 2.0)
    with pytest.raises(ConfigError):
        rate_bound_path(1, 2.0, -0.1, 1.0)
    with pytest.raises(ConfigError):
        rate_bound_weighted(1, 2.0, 0.0, 1.0)
    with pytest.raises(ConfigError):
        rate_bound_weighted(1, 2.0, 0.5, 1.5)


def test_markov_rate_envelope():
    assert markov_rate_envelope(1, 2.0, math.e ** 2) == pytest.approx(2 ** 0.25 * math.exp(-0.5), rel=1e-12)
    assert markov_rate_envelope(1, 2.0, math.e ** 2) == pytest.approx(0.7212, abs=1e-4)

    grid = np.exp(np.linspace(5.0, 20.0, 60))
    for d in (1, 2, 3):
        values = [markov_rate_envelope(d, 2.0, t) for t in grid]
        assert all(a > b for a, b in zip(values, values[1:]))
    for d in (1, 2, 3):
        assert markov_rate_envelope(d, 2.0, 1e8) < markov_rate_envelope(d, 2.0, 1e3)
    assert markov_rate_envelope(1, 2.0, 1e8) < 0.05

    assert markov_rate_envelope_at(1, 2.0, 0.5, math.e ** 4) == pytest.approx(markov_rate_envelope(1, 2.0, math.e ** 2))

    with pytest.raises(DomainError):
        markov_rate_envelope(1, 2.0, 2.0)


@pytest.mark.parametrize("c0", [0.5, 2.0])
def test_contraction_constants_constant_kappa(c0):
    aux = build_aux_function(lambda r: c0 + 0.0 * np.asarray(r, dtype=float), c0, r_max=6.0, grid_size=64)
    constants = contraction_constants(aux, 0.0)
    assert constants.D == pytest.approx(1.0, rel=1e-8)
    assert constants.c == pytest.approx(c0, rel=1e-8)
    assert constants.c_eta == constants.c
    assert constants.admissible


def test_contraction_constants_curie_weiss():
    """D >= 1 for the truncated Curie-Weiss profile"""
    aux = build_aux_function(lambda r: r * r / 4.0 - 1.0, 8.0, grid_size=128)
    constants = contraction_constants(aux, 0.2)
    assert constants.D >= 1.0 - 1e-9
    assert constants.c_eta == pytest.approx(constants.c - 0.2)


def test_contraction_constants_boundary():
    """eta = 1/f'(0): c_eta = 0 and the model is flagged"""
    constants = ContractionConstants.from_values(kappa_inf=2.0, fprime0=0.5, eta=2.0)
    assert constants.c_eta == 0.0
    assert not constants.admissible
    assert constants.to_dict()["admissible"] is False


def test_gronwall_bound():
    constants = ContractionConstants.from_values(kappa_inf=1.0, fprime0=1.0, eta=0.5)
    assert gronwall_bound_distribution(constants, 1.0, 10.0) == pytest.approx(0.2)
    assert gronwall_bound_distribution(constants, 1.0, 20.0) == 0.5 * gronwall_bound_distribution(constants, 1.0, 10.0)
    assert gronwall_bound_distribution(constants, 0.0, 10.0) == 0.0
    assert gronwall_bound_distribution(constants, 3.0, 10.0) == pytest.approx(
        3.0 * gronwall_bound_distribution(constants, 1.0, 10.0), rel=1e-15)
    np.testing.assert_allclose(gronwall_bound_distribution(constants, 1.0, np.array([1.0, 2.0, 4.0])),
                               [2.0, 1.0, 0.5])

    with pytest.raises(ConfigError):
        gronwall_bound_distribution(ContractionConstants.from_values(1.0, 1.0, 1.0), 1.0, 10.0)
    with pytest.raises(DomainError):
        gronwall_bound_distribution(constants, 1.0, 0.0)


def test_exponential_bounds():
    constants = ContractionConstants.from_values(kappa_inf=4.0, fprime0=0.5, eta=0.5)
    assert markov_contraction_bound(constants, 2.0, 0.0) == pytest.approx(4.0)
    assert markov_contraction_bound(constants, 2.0, 1.0) == pytest.approx(4.0 * math.exp(-2.0))
    assert law_decay_bound(constants, 1.0, 1.0) == pytest.approx(2.0 * math.exp(-1.5))
    envelope = coupling_envelope(constants, 1.0, np.array([0.0, 2.0]))
    np.testing.assert_allclose(envelope, [1.0, math.exp(-3.0)])
    with pytest.raises(DomainError):
        law_decay_bound(constants, 1.0, -1.0)


def test_interaction_admissibility_helpers():
    constants = ContractionConstants.from_values(kappa_inf=2.0, fprime0=1.0)
    verdict = weighted_interaction_admissible(0.2, constants)
    assert verdict.admissible
    assert verdict.bound == pytest.approx(0.5)
    assert verdict.margin == pytest.approx(0.3)
    assert not weighted_interaction_admissible(0.5, constants).admissible

    assert lebesgue_pi1_range(0.2, constants) == pytest.approx(0.6)
    assert lebesgue_pi1_range(1.0, constants) == 0.0
    with pytest.raises(ConfigError):
        lebesgue_pi1_range(-0.1, constants)


def test_fit_exact_power_law():
    t = np.logspace(0, 3, 40)
    curve = list(zip(t, 7.0 * t ** -0.3))
    fit = fit_loglog_slope(curve, window=slice(None))
    assert fit.slope == pytest.approx(-0.3, abs=1e-10)
    assert fit.intercept == pytest.approx(math.log(7.0), abs=1e-10)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit_loglog_slope(curve).slope == pytest.approx(-0.3, abs=1e-10)


def test_fit_constant_curve():
    curve = [CurvePoint(k, float(k), 0.4, 0.0, 10) for k in range(1, 11)]
    fit = fit_loglog_slope(curve)
    assert fit.slope == pytest.approx(0.0, abs=1e-12)
    assert fit.r_squared == 1.0

    rate = fit_loglinear_rate([(0.1 * k, 0.37) for k in range(1, 41)])
    assert rate.slope == pytest.approx(0.0, abs=1e-12)
    assert rate.r_squared == 1.0


def test_fit_noisy_power_law():
    rng = np.random.default_rng(10)
    t = np.logspace(0, 4, 50)
    values = 2.0 * t ** -0.5 * np.exp(rng.normal(scale=0.05, size=t.size))
    assert fit_loglog_slope(list(zip(t, values)), window=slice(None)).slope == pytest.approx(-0.5, abs=0.05)


def test_fit_errors():
    with pytest.raises(ConfigError):
        fit_loglog_slope([(1.0, 1.0), (2.0, 0.5)])
    with pytest.raises(DomainError):
        fit_loglog_slope([(1.0, 1.0), (2.0, 0.0), (3.0, 0.2)], window=slice(None))
    with pytest.raises(DomainError):
        fit_loglinear_rate([(0.0, 1.0), (1.0, -1.0), (2.0, 0.5)])


def test_fit_loglinear_rate():
    t = np.linspace(0.0, 5.0, 30)
    fit = fit_loglinear_rate(list(zip(t, 3.0 * np.exp(-0.7 * t))))
    assert fit.slope == pytest.approx(-0.7, abs=1e-10)
    assert fit.r_squared == pytest.approx(1.0)


def test_stationary_density_curie_weiss():
    density = stationary_density_cw(CurieWeissParams(beta=1.0, K=0.2))
    assert float(density.pdf(1.0) / density.pdf(0.0)) == pytest.approx(math.exp(0.5), rel=1e-12)
    assert density.expect(lambda x: x) == pytest.approx(0.0, abs=1e-10)
    assert density.expect(lambda x: 1.0) == pytest.approx(1.0, abs=1e-8)
    # K does not enter the symmetric density
    other = stationary_density_cw(CurieWeissParams(beta=1.0, K=1.0))
    assert float(other.pdf(0.7)) == pytest.approx(float(density.pdf(0.7)), rel=1e-12)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
