import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gelcal.calibration import CalibrationProblem, solve_lambda, solve_lambda_quadratic_closed_form
from gelcal.errors import LineSearchStalled, NotPositiveDefinite
from gelcal.numeric import cholesky, maximize_concave, solve_spd
from gelcal.rho import quadratic


def test_solve_spd_identity():
    np.testing.assert_allclose(solve_spd(np.eye(2), [3.0, 4.0]), [3.0, 4.0])


def test_solve_spd_diagonal():
    np.testing.assert_allclose(solve_spd([[2.0, 0.0], [0.0, 4.0]], [2.0, 8.0]), [1.0, 2.0])


def test_solve_spd_random_residual():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((5, 5))
    A = M.T @ M + np.eye(5)
    b = rng.standard_normal(5)
    x = solve_spd(A, b)
    assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) <= 1e-10


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_solve_spd_residual_property(k, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((k + 3, k))
    A = M.T @ M + 1e-3 * np.eye(k)
    b = rng.standard_normal(k)
    x = solve_spd(A, b)
    assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) <= 1e-9


def test_solve_spd_rejects_singular():
    with pytest.raises(NotPositiveDefinite):
        solve_spd([[1.0, 1.0], [1.0, 1.0]], [1.0, 2.0])
    with pytest.raises(NotPositiveDefinite):
        cholesky(np.array([[1.0, 0.0], [0.0, -1.0]]))


def test_solve_spd_rejects_asymmetric_and_mismatch():
    with pytest.raises(ValueError):
        solve_spd([[1.0, 0.5], [0.0, 1.0]], [1.0, 1.0])
    with pytest.raises(ValueError):
        solve_spd(np.eye(2), [1.0, 2.0, 3.0])


def _bowl(x):
    return -0.5 * x @ x, -x, -np.eye(x.size)


def test_newton_quadratic_bowl():
    rep = maximize_concave(_bowl, [5.0, 5.0])
    assert rep.converged
    assert np.max(np.abs(rep.argmax)) <= 1e-8


def test_newton_log_one_minus_v_plus_v():
    def obj(x):
        v = x[0]
        if v >= 1:
            return None
        return np.log(1 - v) + v, np.array([-1 / (1 - v) + 1]), np.array([[-1 / (1 - v) ** 2]])

    rep = maximize_concave(obj, [0.0])
    assert rep.converged and rep.iterations == 0
    assert rep.argmax[0] == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_newton_concave_quadratic_two_steps(k, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((k + 2, k))
    A = M.T @ M + 0.1 * np.eye(k)
    c = rng.standard_normal(k) * 10

    def obj(x):
        d = x - c
        return -0.5 * d @ A @ d, -A @ d, -A

    rep = maximize_concave(obj, np.zeros(k), tol=1e-10)
    assert rep.converged and rep.iterations <= 2
    assert rep.gradient_norm <= 1e-10


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_newton_monotone_ascent(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((30, 2))
    b = rng.standard_normal(2)

    def obj(x):
        v = a @ x
        e = np.exp(v)
        return -e.sum() + b @ x * 30, -a.T @ e + 30 * b, -(a * e[:, None]).T @ a

    try:
        rep = maximize_concave(obj, np.zeros(2), max_iter=200)
    except LineSearchStalled:
        return  # unbounded direction; nothing to check
    assert np.all(np.diff(rep.history) >= -1e-12 * (1 + np.abs(rep.history[:-1])))


def test_newton_infeasible_start_rejected():
    with pytest.raises(ValueError):
        maximize_concave(_bowl, [1.0], feasible=lambda x: x[0] < 0)


def test_newton_box_rejection_stalls_at_boundary():
    # maximum at 5 lies outside the box x < 1; the search must not step out of it
    def obj(x):
        return -0.5 * (x[0] - 5) ** 2, np.array([5 - x[0]]), np.array([[-1.0]])

    with pytest.raises(LineSearchStalled):
        maximize_concave(obj, [0.0], feasible=lambda x: x[0] < 1, max_iter=200)


def test_newton_max_iterations_returns_report():
    def obj(x):
        v = x[0]
        # concave with slowly decaying gradient far from the maximum
        return -np.sqrt(1 + v * v), np.array([-v / np.sqrt(1 + v * v)]), np.array([[-(1 + v * v) ** -1.5]])

    rep = maximize_concave(obj, [0.5], max_iter=1)
    assert not rep.converged and rep.iterations == 1 and not rep.stalled


def test_newton_stops_at_gradient_noise_floor():
    # gradient carries deterministic noise of order 1e-7, far above tol, while
    # the value moves only below its rounding level
    def obj(x):
        return 1e6 - 0.5 * float(x @ x), -x + 1e-7 * np.cos(1e9 * x), -np.eye(1)

    rep = maximize_concave(obj, [1.0], tol=1e-10, max_iter=100)
    assert rep.stalled and not rep.converged
    assert rep.iterations < 100 and abs(rep.argmax[0]) <= 1e-6


def test_newton_matches_closed_form_quadratic_calibration():
    rng = np.random.default_rng(3)
    n = 10
    u = rng.standard_normal((n, 2))
    r = np.array([1, 1, 0, 1, 1, 0, 1, 1, 1, 0])
    pi = rng.uniform(0.4, 0.9, n)
    prob = CalibrationProblem.build(u, r, pi, quadratic())
    a = solve_lambda(prob, box=None)
    b = solve_lambda_quadratic_closed_form(prob)
    np.testing.assert_allclose(a.lambda_hat, b.lambda_hat, atol=1e-8)
    np.testing.assert_allclose(a.weights, b.weights, atol=1e-8)
