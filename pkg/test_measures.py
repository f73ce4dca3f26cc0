"""
Tests for weighted empirical measures, weight families and admissibility integrals
"""

import math

import numpy as np
import pytest

from errors import ConfigError, DimensionError, DomainError, RangeError
from measures import (RunningOccupation, WeightFamily, WeightedEmpiricalMeasure, occupation_measure,
                      pi1_admissible, pi1_integral, pi2_admissible, pi2_integrals)


def test_measure_validation():
    """Weights must be nonnegative, sum to one and match the support"""
    with pytest.raises(ConfigError):
        WeightedEmpiricalMeasure([0.0, 1.0], [0.7, 0.7])
    with pytest.raises(ConfigError):
        WeightedEmpiricalMeasure([0.0, 1.0], [1.5, -0.5])
    with pytest.raises(DimensionError):
        WeightedEmpiricalMeasure([0.0, 1.0], [1.0])
    mu = WeightedEmpiricalMeasure([[0.0, 1.0], [2.0, 3.0]], [0.25, 0.75])
    assert mu.dimension == 2
    np.testing.assert_allclose(mu.mean(), [1.5, 2.5])


def test_merging():
    """Points closer than 1e-12 merge with summed weights"""
    mu = WeightedEmpiricalMeasure([1.0, 0.0, 1.0 + 1e-14], [0.25, 0.5, 0.25]).merged()
    assert mu.size == 2
    np.testing.assert_allclose(mu.support[:, 0], [0.0, 1.0])
    np.testing.assert_allclose(mu.weights, [0.5, 0.5])
    assert mu.same_as(WeightedEmpiricalMeasure.uniform([1.0, 0.0]))


@pytest.mark.parametrize("family", [WeightFamily.lebesgue(), WeightFamily.discrete(0.5), WeightFamily.power(1.5)])
def test_constant_path_gives_dirac(family):
    """A constant path has a single atom of weight one"""
    times = np.arange(41) * 0.25
    states = np.full(41, 3.0)
    mu = occupation_measure(times, states, family, 7.3)
    assert mu.size == 1
    assert mu.support[0, 0] == 3.0
    assert mu.weights[0] == pytest.approx(1.0)


def test_discrete_before_first_atom():
    """t < tau: the measure is delta at Z_0"""
    times = np.arange(11) * 0.1
    states = np.arange(11, dtype=float)
    mu = occupation_measure(times, states, WeightFamily.discrete(1.0), 0.5)
    assert mu.same_as(WeightedEmpiricalMeasure.dirac(0.0))


def test_lebesgue_left_endpoint_rule():
    """Grid {0, 0.5, 1} with states {0, 2, 4} at t = 1"""
    mu = occupation_measure(np.array([0.0, 0.5, 1.0]), np.array([0.0, 2.0, 4.0]), WeightFamily.lebesgue(), 1.0)
    np.testing.assert_allclose(mu.support[:, 0], [0.0, 2.0])
    np.testing.assert_allclose(mu.weights, [0.5, 0.5])


def test_lebesgue_equals_time_average():
    """Each step carries weight step length / t"""
    rng = np.random.default_rng(1)
    times = np.arange(101) * 0.1
    states = rng.normal(size=101)
    mu = occupation_measure(times, states, WeightFamily.lebesgue(), 10.0)
    assert mu.size == 100
    assert mu.mean()[0] == pytest.approx(states[:100].mean(), rel=1e-12)
    np.testing.assert_allclose(mu.weights, 0.01, rtol=1e-9)


def test_discrete_atom_counts():
    """t in [n tau, (n + 1) tau) gives n atoms of weight 1/n"""
    family = WeightFamily.discrete(0.5)
    times = np.arange(101) * 0.1
    states = np.arange(101, dtype=float)
    for t, n in ((0.5, 1), (0.9, 1), (1.0, 2), (2.7, 5), (10.0, 20)):
        mu = occupation_measure(times, states, family, t)
        assert mu.size == n
        np.testing.assert_allclose(mu.weights, 1.0 / n)
    mu = occupation_measure(times, states, family, 1.2)
    np.testing.assert_allclose(np.sort(mu.support[:, 0]), [5.0, 10.0])


def test_occupation_errors():
    """Beyond the horizon and t = 0 for density families"""
    times = np.arange(11) * 0.1
    states = np.zeros(11)
    with pytest.raises(RangeError):
        occupation_measure(times, states, WeightFamily.lebesgue(), 1.5)
    with pytest.raises(DomainError):
        occupation_measure(times, states, WeightFamily.lebesgue(), 0.0)


def test_pi1_integral():
    """Singular moments of lebesgue and discrete weights"""
    assert pi1_integral(WeightFamily.lebesgue(), 3.0, 0.5) == pytest.approx(2.0)
    for eps in (0.1, 0.3, 0.9):
        assert pi1_integral(WeightFamily.lebesgue(), 123.0, eps) == pytest.approx(1.0 / (1.0 - eps))
    assert math.isinf(pi1_integral(WeightFamily.lebesgue(), 1.0, 1.0))

    tau = 0.7
    assert pi1_integral(WeightFamily.discrete(tau), 2 * tau, 0.5) == pytest.approx((math.sqrt(2) + 1) / 2)
    assert math.isinf(pi1_integral(WeightFamily.discrete(tau), tau / 2, 0.3))


def test_pi1_admissible():
    """Lebesgue, eps = 1/2: integral 2 against 1 / (eta kappa_inf f'(0)^2)"""
    lebesgue = WeightFamily.lebesgue()
    ok = pi1_admissible(lebesgue, 0.5, eta=0.4, kappa_inf=1.0, fprime0=1.0)
    assert ok.admissible
    assert ok.margin == pytest.approx(0.5)

    bad = pi1_admissible(lebesgue, 0.5, eta=0.6, kappa_inf=1.0, fprime0=1.0)
    assert not bad.admissible

    early = pi1_admissible(WeightFamily.discrete(5.0), 0.5, eta=0.1, kappa_inf=1.0, fprime0=1.0)
    assert not early.admissible


def test_pi2_integrals():
    """Capped single and double integrals"""
    single, _ = pi2_integrals(WeightFamily.lebesgue(), 4.0, 0.5)
    assert single == pytest.approx(1.5, rel=1e-10)

    _, double = pi2_integrals(WeightFamily.discrete(1.0), 2.0, 1.0)
    assert double == pytest.approx(2.0)

    for family in (WeightFamily.lebesgue(), WeightFamily.discrete(0.3)):
        s, dbl = pi2_integrals(family, 0.8, 0.5)
        cap = 0.8 ** 0.5
        assert s <= cap + 1e-12
        assert dbl <= cap + 1e-9


def test_pi2_single_nondecreasing_in_eps():
    """For t >= e both s^-eps and the cap t^eps grow with eps, so the capped integral does too"""
    for t in (3.0, 50.0):
        values = [pi2_integrals(WeightFamily.lebesgue(), t, eps)[0] for eps in (0.1, 0.3, 0.5, 0.7)]
        assert all(a <= b + 1e-12 for a, b in zip(values, values[1:]))
        assert values[-1] > values[0]
    single = [pi2_integrals(WeightFamily.lebesgue(), 3.0, eps)[0] for eps in (0.1, 0.3, 0.5, 0.7)]
    assert single == pytest.approx([1.070, 1.230, 1.423, 1.655], abs=2e-3)


def test_pi2_admissible():
    """Lebesgue weights settle for eps < 1 and keep growing at eps = 1"""
    times = [1.0, 10.0, 100.0, 1000.0]
    assert pi2_admissible(WeightFamily.lebesgue(), 0.5, times).admissible
    assert not pi2_admissible(WeightFamily.lebesgue(), 1.0, times).admissible


@pytest.mark.parametrize("family", [WeightFamily.lebesgue(), WeightFamily.power(2.0), WeightFamily.discrete(0.3)])
def test_running_occupation_matches_measure(family):
    """Running means agree with the stored history measure"""
    rng = np.random.default_rng(7)
    dt = 0.1
    occupation = RunningOccupation(family, n_paths=3, dimension=1, dt=dt, keep_history=True)
    for k in range(25):
        means = occupation.update(k, rng.normal(size=(3, 1)))
        for path in range(3):
            assert means[path, 0] == pytest.approx(occupation.measure(path).mean()[0], rel=1e-12, abs=1e-12)


def test_running_occupation_sequential():
    """Steps must arrive in order"""
    occupation = RunningOccupation(WeightFamily.lebesgue(), 1, 1, 0.1)
    occupation.update(0, np.zeros((1, 1)))
    with pytest.raises(ConfigError):
        occupation.update(2, np.zeros((1, 1)))


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
