"""
Tests for drift models, the auxiliary function and the assumption checkers
"""

import math

import numpy as np
import pytest

from errors import ConfigError, DomainError, EstimationError
from measures import WeightedEmpiricalMeasure
from model import (CurieWeissParams, DriftModel, build_aux_function, check_dissipativity,
                   check_kappa_profile, check_weak_interaction, curie_weiss_model, default_truncation_cw,
                   kappa_eff, polynomial_model, weak_interaction_threshold_cw)


def constant_kappa(c0):
    return lambda r: c0 + 0.0 * np.asarray(r, dtype=float)


def test_curie_weiss_drift_values():
    """Drift examples at hand-checked points"""
    model = curie_weiss_model(CurieWeissParams(beta=1.0, K=0.2))
    delta0 = WeightedEmpiricalMeasure.dirac(0.0)
    assert model(0.0, delta0)[0] == 0.0
    assert model(1.0, delta0)[0] == 0.0

    model = curie_weiss_model(CurieWeissParams(beta=1.0, K=0.5))
    assert model(2.0, WeightedEmpiricalMeasure.dirac(2.0))[0] == pytest.approx(-5.0)
    assert model.eta == pytest.approx(0.5)


def test_curie_weiss_params_validation():
    """beta must be positive; K = 0 is the decoupled limit"""
    with pytest.raises(ConfigError):
        CurieWeissParams(beta=0.0, K=0.2)
    with pytest.raises(ConfigError):
        CurieWeissParams(beta=1.0, K=-0.1)
    assert curie_weiss_model(CurieWeissParams(1.0, 0.0)).eta == 0.0


def test_kappa_eff():
    """Truncated profile min(kappa, L)"""
    raw = curie_weiss_model(CurieWeissParams(1.0, 0.2))
    assert kappa_eff(raw, 2.0) == pytest.approx(0.0)

    truncated = curie_weiss_model(CurieWeissParams(1.0, 0.2), truncation=1.0)
    assert kappa_eff(truncated, 4.0) == pytest.approx(1.0)
    assert kappa_eff(truncated, 1.0) == pytest.approx(-0.75)

    with pytest.raises(DomainError):
        kappa_eff(raw, 0.0)

    grid = np.linspace(0.01, 10.0, 500)
    assert np.all(np.diff(truncated.kappa_eff(grid)) >= 0)


def test_kappa_profile_check():
    """Curie-Weiss profile is nondecreasing with r kappa(r) -> 0"""
    model = curie_weiss_model(CurieWeissParams(1.0, 0.2), truncation=8.0)
    assert check_kappa_profile(model).passed

    bumpy = polynomial_model([0.0, -1.0], [1.0, 0.0, -1.0], truncation=1.0)
    assert not check_kappa_profile(bumpy).nondecreasing


def test_dissipativity_curie_weiss():
    """Untruncated Curie-Weiss passes at 1e-9 for any seed"""
    model = curie_weiss_model(CurieWeissParams(1.0, 0.2))
    for seed in (0, 1, 2):
        report = check_dissipativity(model, n_samples=500, seed=seed, tolerance=1e-9)
        assert report.passed
        assert report.max_violation <= 1e-9


def test_dissipativity_expanding_drift():
    """Drift b(x) = x with kappa = 1 is reported as a violation"""
    model = DriftModel(dimension=1, drift=lambda x, mu: x, kappa=constant_kappa(1.0))
    report = check_dissipativity(model, n_samples=50, seed=3)
    assert report.max_violation > 0
    assert not report.passed


def test_dissipativity_equal_points():
    """x = y pairs give zero violation"""
    model = DriftModel(dimension=1, drift=lambda x, mu: x, kappa=constant_kappa(1.0))

    def same_point(rng):
        x = rng.uniform(-5, 5, 1)
        return x, x.copy(), WeightedEmpiricalMeasure.dirac(0.0)

    report = check_dissipativity(model, n_samples=20, sampler=same_point)
    assert report.max_violation == 0.0


def test_weak_interaction_estimate():
    """Ratio |b(x, mu) - b(x, nu)| / W1 on fixed pairs"""
    model = curie_weiss_model(CurieWeissParams(1.0, 0.2))
    fixed = lambda rng: (np.array([0.3]), WeightedEmpiricalMeasure.dirac(0.0), WeightedEmpiricalMeasure.dirac(1.0))
    report = check_weak_interaction(model, n_samples=5, sampler=fixed)
    assert report.eta_hat == pytest.approx(0.2)
    assert report.passed

    sampled = check_weak_interaction(model, n_samples=300, seed=5)
    assert sampled.eta_hat <= 0.2 + 1e-9


def test_weak_interaction_measure_independent():
    """A drift that ignores mu has eta_hat = 0"""
    model = polynomial_model([0.0, -1.0], [1.0])
    assert check_weak_interaction(model, n_samples=100).eta_hat == 0.0


def test_weak_interaction_identical_pairs():
    """Only identical pairs: estimate undefined"""
    model = curie_weiss_model(CurieWeissParams(1.0, 0.2))
    same = lambda rng: (np.array([0.0]), WeightedEmpiricalMeasure.dirac(1.0), WeightedEmpiricalMeasure.dirac(1.0))
    with pytest.raises(EstimationError):
        check_weak_interaction(model, n_samples=10, sampler=same)


@pytest.mark.parametrize("c0", [0.5, 1.0, 2.0])
def test_aux_function_constant_kappa(c0):
    """Constant profile: f'(r) = 1/c0 and f(r) = r/c0"""
    aux = build_aux_function(constant_kappa(c0), c0, r_max=6.0, grid_size=64)
    np.testing.assert_allclose(aux.fprime, 1.0 / c0, rtol=1e-8)
    np.testing.assert_allclose(aux.f, aux.radii / c0, rtol=1e-8, atol=1e-12)
    assert aux.fprime0 == pytest.approx(1.0 / c0, rel=1e-8)
    assert aux.f[0] == 0.0


def test_aux_function_curie_weiss():
    """Structural checks and ODE residual for Curie-Weiss truncated at L = 8"""
    model = curie_weiss_model(CurieWeissParams(1.0, 0.2), truncation=8.0)
    aux = build_aux_function(model.kappa, 8.0, grid_size=256)
    assert aux.kappa_inf == 8.0
    assert all(aux.check().values()), aux.check()

    ratio = aux.f[1:] / aux.radii[1:]
    assert np.all(ratio >= 1.0 / aux.kappa_inf - 1e-8)
    assert np.all(ratio <= aux.fprime0 + 1e-8)
    assert np.all(aux.fsecond <= 1e-8)
    inner, residual = aux.ode_residual_fd()
    assert np.all(residual <= 1e-4 * (1.0 + inner))


def test_aux_function_value_continues_linearly():
    """Beyond the table f grows with slope f'(r_max)"""
    aux = build_aux_function(constant_kappa(1.0), 1.0, r_max=4.0, grid_size=32)
    assert float(aux.value(0.0)) == 0.0
    assert float(aux.value(6.0)) == pytest.approx(6.0, rel=1e-8)


def test_aux_function_configuration_errors():
    """Truncation level is mandatory; the grid needs 16 points"""
    with pytest.raises(ConfigError):
        build_aux_function(constant_kappa(1.0), None)
    with pytest.raises(ConfigError):
        build_aux_function(constant_kappa(1.0), -1.0)
    with pytest.raises(ConfigError):
        build_aux_function(constant_kappa(1.0), 1.0, grid_size=8)


def test_weak_interaction_threshold():
    """Threshold at beta = 1 and its behaviour in beta"""
    assert weak_interaction_threshold_cw(1.0) == pytest.approx(0.2876, abs=5e-4)
    assert weak_interaction_threshold_cw(1e-6) > 100

    phi = 0.5 * math.erfc(-1.0)
    expected = 1.0 / (math.sqrt(2.0 * math.pi * 2.0 * math.exp(2.0)) * phi)
    assert weak_interaction_threshold_cw(2.0) == pytest.approx(expected, rel=1e-12)

    values = [weak_interaction_threshold_cw(b) for b in (0.5, 1.0, 2.0, 4.0)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_default_truncation():
    """Default level is kappa(6) = 8 beta"""
    assert default_truncation_cw(1.0) == pytest.approx(8.0)
    assert default_truncation_cw(2.5) == pytest.approx(20.0)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
