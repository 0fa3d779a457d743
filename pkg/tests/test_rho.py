import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gelcal.errors import DegenerateRho, OutOfDomain, ThetaAtLimit
from gelcal.rho import (empirical_likelihood, evaluate, exponential_tilting, from_name, normalize,
                        power_divergence, quadratic)

KINDS = [quadratic(), empirical_likelihood(), exponential_tilting(), power_divergence(-2.0),
         power_divergence(2.0 / 3.0), power_divergence(1.5), power_divergence(-0.5)]


def _sample_domain(rho, rng, k=1000):
    lo = max(rho.lo, -3.0)
    hi = min(rho.hi, 3.0)
    pad = 1e-3 * (hi - lo)
    return rng.uniform(lo + pad, hi - pad, k)


def test_named_examples():
    assert evaluate(quadratic(), 0.0, 1) == -1.0
    assert evaluate(empirical_likelihood(), 0.5, 1) == -2.0
    assert evaluate(exponential_tilting(), 1.0, 2) == pytest.approx(-math.e, rel=1e-15)


def test_out_of_domain():
    with pytest.raises(OutOfDomain):
        evaluate(empirical_likelihood(), 1.0, 0)
    with pytest.raises(OutOfDomain):
        evaluate(power_divergence(2.0), -0.6, 1)
    with pytest.raises(ValueError):
        evaluate(quadratic(), 0.0, 4)


@pytest.mark.parametrize("rho", KINDS, ids=lambda r: r.name)
def test_normalized_at_origin(rho):
    assert evaluate(rho, 0.0, 1) == -1.0
    assert evaluate(rho, 0.0, 2) == -1.0


@pytest.mark.parametrize("rho", KINDS, ids=lambda r: r.name)
def test_concave_and_monotone(rho):
    v = _sample_domain(rho, np.random.default_rng(0))
    d = rho.derivs(v, 2)
    assert np.all(d[2] < 0)
    assert np.all(d[1] != 0)


@pytest.mark.parametrize("rho", KINDS, ids=lambda r: r.name)
def test_finite_differences(rho):
    v = _sample_domain(rho, np.random.default_rng(1), 50) * 0.5
    h = 1e-5
    for j in range(3):
        up = rho.derivs(v + h, 3)[j]
        dn = rho.derivs(v - h, 3)[j]
        fd = (up - dn) / (2 * h)
        exact = rho.derivs(v, 3)[j + 1]
        np.testing.assert_allclose(fd, exact, rtol=1e-6, atol=1e-9)


def test_power_divergence_theta_one_is_quadratic():
    q, pd = quadratic(), power_divergence(1.0)
    for v in (-0.5, 0.0, 0.5):
        for j in range(4):
            assert abs(evaluate(pd, v, j) - evaluate(q, v, j)) <= 1e-12


def test_power_divergence_limits():
    for theta in (0.0, -1.0):
        with pytest.raises(ThetaAtLimit):
            power_divergence(theta)
    neyman = power_divergence(-2.0)
    assert neyman.hi == 0.5 and neyman.lo == -math.inf


@settings(max_examples=100, deadline=None)
@given(st.floats(-5, 5).filter(lambda t: abs(t) > 1e-3 and abs(t + 1) > 1e-3))
def test_power_divergence_normalized_for_any_theta(theta):
    rho = power_divergence(theta)
    assert evaluate(rho, 0.0, 1) == pytest.approx(-1.0, abs=1e-12)
    assert evaluate(rho, 0.0, 2) == pytest.approx(-1.0, abs=1e-12)


def test_power_divergence_approaches_named_limits():
    for v in (-0.3, 0.2):
        assert evaluate(power_divergence(1e-7), v, 1) == pytest.approx(evaluate(exponential_tilting(), v, 1), rel=1e-6)
        assert evaluate(power_divergence(-1 + 1e-7), v, 1) == pytest.approx(
            evaluate(empirical_likelihood(), v, 1), rel=1e-6)


def _raw_shifted_quadratic(v, j):
    return [-0.5 * (v - 1.0) ** 2, -(v - 1.0), -1.0, 0.0][j]


def _raw_exp(scale):
    return lambda v, j: -scale * math.exp(v)


def test_normalize_shifted_quadratic():
    rho = normalize(_raw_shifted_quadratic)
    q = quadratic()
    vals = [evaluate(rho, v, 0) - evaluate(q, v, 0) for v in (-1.0, 0.0, 0.7)]
    assert max(vals) - min(vals) <= 1e-12  # equal up to an additive constant
    assert evaluate(rho, 0.0, 1) == -1.0
    assert evaluate(rho, 0.3, 2) == -1.0


def test_normalize_exp_fixed_point():
    rho = normalize(_raw_exp(1.0))
    et = exponential_tilting()
    for v in (-1.0, 0.0, 0.5):
        for j in range(3):
            assert evaluate(rho, v, j) == pytest.approx(evaluate(et, v, j), rel=1e-15)


def test_normalize_scaled_exp():
    rho = normalize(_raw_exp(3.0))
    # central difference of the normalized value at 0
    h = 1e-6
    fd = (evaluate(rho, h, 0) - evaluate(rho, -h, 0)) / (2 * h)
    assert fd == pytest.approx(-1.0, abs=1e-8)
    assert abs(evaluate(rho, 0.0, 1) + 1.0) <= 1e-12


def test_normalize_degenerate():
    with pytest.raises(DegenerateRho):
        normalize(lambda v, j: [-(v ** 4), -4 * v ** 3, -12 * v ** 2, -24 * v][j])


def test_normalize_maps_domain():
    rho = normalize(lambda v, j: [math.log(2 - v), -1 / (2 - v), -1 / (2 - v) ** 2, -2 / (2 - v) ** 3][j],
                    domain=(-math.inf, 2.0))
    # raw log(2 - v) normalizes to the EL member log(1 - v) up to constants
    el = empirical_likelihood()
    assert rho.hi == pytest.approx(1.0)
    for v in (-0.5, 0.5):
        assert evaluate(rho, v, 1) == pytest.approx(evaluate(el, v, 1), rel=1e-12)


def test_from_name():
    assert from_name("Q") == quadratic()
    assert from_name("el") == empirical_likelihood()
    assert from_name("cressie-read:0.6667").theta == pytest.approx(0.6667)
    with pytest.raises(ValueError):
        from_name("huber")
    with pytest.raises(ThetaAtLimit):
        from_name("cressie-read:0")
