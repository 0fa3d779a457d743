"""GEL calibration weights.

Given calibration functions ``u`` evaluated on all N units, inverse
propensities for the complete cases and a normalized ``rho``, find
complete-case weights ``p`` summing to one whose weighted mean of ``u``
equals the full-sample mean ``u_bar``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (
    InfeasibleCalibration,
    LineSearchStalled,
    MissingConstantColumn,
    NotPositiveDefinite,
    TooFewCompleteCases,
    WeightNormalizationWarning,
)
from .numeric import NewtonReport, cholesky, maximize_concave, solve_spd
from .rho import RhoFunction, quadratic

# gradient tolerance on the standardized scale; tighter than the moment
# tolerance so residuals in the original units of u stay below 1e-8
GRAD_TOL = 1e-11
MOMENT_TOL = 1e-8


@dataclass(frozen=True)
class FeasibilityBox:
    """Open interval ``(v_lo, v_hi)`` that every ``lambda' (u_i - u_bar)`` must stay in."""

    v_lo: float = -0.9
    v_hi: float = 0.9

    def __post_init__(self):
        if not (self.v_lo < 0.0 < self.v_hi):
            raise ValueError(f"box must contain 0, got ({self.v_lo}, {self.v_hi})")

    def check(self, rho: RhoFunction) -> None:
        """Require rho' to keep one sign on the closed box (within rho's domain)."""
        lo = max(self.v_lo, rho.lo + 1e-12 if math.isfinite(rho.lo) else self.v_lo)
        hi = min(self.v_hi, rho.hi - 1e-12 if math.isfinite(rho.hi) else self.v_hi)
        d1 = rho.derivs(np.linspace(lo, hi, 201), max_order=1)[1]
        if not (np.all(d1 < 0) or np.all(d1 > 0)):
            raise ValueError(f"rho' changes sign on the box ({self.v_lo}, {self.v_hi}) for {rho.name}")


DEFAULT_BOX = FeasibilityBox()


@dataclass(frozen=True, eq=False)
class CalibrationProblem:
    """Inputs to the weight solvers.

    ``base_weights`` holds 1/pi for every unit (only complete-case entries
    are used); ``u_bar`` is the full-sample column mean of ``u``.
    """

    u: np.ndarray
    u_bar: np.ndarray
    r: np.ndarray
    base_weights: np.ndarray
    rho: RhoFunction

    @classmethod
    def build(cls, u, r, pi, rho: RhoFunction | None = None) -> "CalibrationProblem":
        u = np.asarray(u, dtype=float)
        if u.ndim == 1:
            u = u[:, None]
        r = np.asarray(r).astype(np.int64)
        pi = np.asarray(pi, dtype=float)
        if u.shape[0] != r.shape[0] or pi.shape != r.shape:
            raise ValueError("u, r and pi must have the same number of rows")
        if np.any(pi[r == 1] <= 0):
            raise ValueError("propensities must be positive on complete cases")
        bw = np.where(r == 1, 1.0 / np.where(pi > 0, pi, 1.0), 0.0)
        return cls(u=u, u_bar=u.mean(axis=0), r=r, base_weights=bw, rho=rho or quadratic())

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def q(self) -> int:
        return self.u.shape[1]

    @property
    def complete(self) -> np.ndarray:
        return self.r == 1


@dataclass(frozen=True, eq=False)
class CalibrationResult:
    """Solved weights.

    ``weights`` has one entry per unit (N), zero where r=0, so that
    ``weights @ y_filled`` is the calibration estimate.
    """

    lambda_hat: np.ndarray
    weights: np.ndarray
    moment_residual: np.ndarray
    restricted: bool
    newton: NewtonReport | None
    method: str
    rho_name: str

    @property
    def converged(self) -> bool:
        ok = float(np.max(np.abs(self.moment_residual), initial=0.0)) <= MOMENT_TOL
        return ok and (self.newton is None or _settled(self.newton))


def _standardized_rows(problem: CalibrationProblem):
    """Centered, scaled complete-case rows of the non-constant columns of u.

    A column constant over all N units is already calibrated by the
    normalization sum_i r_i p_i = 1; it is left out of the solve and its
    lambda entry is zero. Returns ``(a, s, active)``.
    """
    cc = problem.complete
    active = ~np.all(problem.u == problem.u[0], axis=0)
    q = int(active.sum())
    if cc.sum() < q + 1:
        raise TooFewCompleteCases(f"{int(cc.sum())} complete cases for q={q} calibration functions")
    d = problem.u[cc][:, active] - problem.u_bar[active]
    s = problem.u[cc][:, active].std(axis=0)
    if np.any(s <= 1e-12 * np.maximum(1.0, np.abs(problem.u_bar[active]))):
        raise NotPositiveDefinite("a calibration function is constant on the complete cases")
    return np.ascontiguousarray(d / s), s, active


def _full_lambda(lam_std, s, active):
    lam = np.zeros(active.shape[0])
    lam[active] = lam_std / s
    return lam


def _criterion(a, w, rho: RhoFunction, lo: float, hi: float):
    """Callable returning (value, gradient, Hessian) of sum_i w_i rho(a_i' lam), or None off-domain."""
    if rho.code >= 0:
        theta = float(rho.theta) if rho.theta is not None else 0.0

        def f(lam):
            ok, val, g, H = _kernels.gel_accumulate(a, w, lam, rho.code, theta, lo, hi)
            return (val, g, H) if ok else None
    else:
        def f(lam):
            v = a @ lam
            if np.any(v <= lo) or np.any(v >= hi):
                return None
            r0, r1, r2 = rho.derivs(v, max_order=2)
            return float(w @ r0), a.T @ (w * r1), (a * (w * r2)[:, None]).T @ a
    return f


def _gel_weights(problem: CalibrationProblem, v_cc, normalizer=None):
    cc = problem.complete
    d1 = problem.rho.derivs(v_cc, max_order=1)[1]
    num = problem.base_weights[cc] * d1
    den = num.sum() if normalizer is None else normalizer
    p = np.zeros(problem.n)
    p[cc] = num / den
    return p


def _newton_tol(tol: float, scale) -> float:
    # the solve runs on standardized columns; the moment residual in the
    # original units is roughly the gradient times the column scale
    return min(tol, 0.1 * MOMENT_TOL / max(1.0, float(np.max(scale, initial=1.0))))


def _settled(rep) -> bool:
    # a Newton run stalled at the rounding floor of the gradient still counts
    # when the moment residual check (made by the caller) passes
    return rep.converged or rep.stalled


def _residual(problem, p):
    return problem.u_bar - p @ problem.u


def solve_lambda(problem: CalibrationProblem, box: FeasibilityBox | None = DEFAULT_BOX,
                 tol: float = GRAD_TOL, max_iter: int = 100) -> CalibrationResult:
    """Maximize ``sum_i r_i pi_i^-1 rho(lambda' (u_i - u_bar))`` and form the weights.

    Newton starts at lambda = 0 on standardized columns of u. With ``box``
    set, every trial iterate must keep all complete-case
    ``v_i = lambda' (u_i - u_bar)`` inside the box. Raises
    InfeasibleCalibration when the moment conditions cannot be met.
    """
    rho = problem.rho
    a, s, active = _standardized_rows(problem)
    w = problem.base_weights[problem.complete] / problem.n
    lo, hi = rho.lo, rho.hi
    if box is not None:
        box.check(rho)
        lo, hi = max(lo, box.v_lo), min(hi, box.v_hi)
    if a.shape[1]:
        cholesky((a * w[:, None]).T @ a)
    crit = _criterion(a, w, rho, lo, hi)
    try:
        rep = maximize_concave(crit, np.zeros(a.shape[1]), tol=_newton_tol(tol, s), max_iter=max_iter)
    except LineSearchStalled as exc:
        hint = "the feasibility box may be binding" if box is not None else \
            "the full-sample means may lie outside what reweighting the complete cases can reach"
        raise InfeasibleCalibration(f"{rho.name}: {exc}; {hint}") from None
    v = a @ rep.argmax
    p = _gel_weights(problem, v)
    res = _residual(problem, p)
    restricted = bool(box is not None and (np.min(v) <= box.v_lo * 0.999 or np.max(v) >= box.v_hi * 0.999))
    if not _settled(rep) or np.max(np.abs(res)) > MOMENT_TOL:
        where = " (feasibility box is binding)" if restricted else ""
        raise InfeasibleCalibration(
            f"{rho.name}: calibration did not converge after {rep.iterations} iterations, "
            f"max moment residual {np.max(np.abs(res)):.3e}{where}"
        )
    return CalibrationResult(lambda_hat=_full_lambda(rep.argmax, s, active), weights=p, moment_residual=res,
                             restricted=restricted, newton=rep, method="gel", rho_name=rho.name)


def solve_lambda_quadratic_closed_form(problem: CalibrationProblem) -> CalibrationResult:
    """Explicit lambda for the quadratic rho.

    ``lambda = -[sum r pi^-1 (u - u_bar)(u - u_bar)']^-1 sum r pi^-1 (u - u_bar)``.
    """
    if problem.rho.kind != "quadratic":
        raise ValueError("closed form applies to the quadratic rho only")
    a, s, active = _standardized_rows(problem)
    w = problem.base_weights[problem.complete]
    G = (a * w[:, None]).T @ a
    b = a.T @ w
    lam_std = -solve_spd(G, b) if a.shape[1] else np.zeros(0)
    v = a @ lam_std
    p = _gel_weights(problem, v)
    return CalibrationResult(lambda_hat=_full_lambda(lam_std, s, active), weights=p,
                             moment_residual=_residual(problem, p),
                             restricted=False, newton=None, method="closed-form", rho_name="quadratic")


def solve_centered(problem: CalibrationProblem, tol: float = GRAD_TOL, max_iter: int = 100) -> CalibrationResult:
    """Calibration weights built from the centered moment ``r pi^-1 u - u_bar``.

    ``lambda_2`` maximizes ``sum_i rho(lambda' (r_i pi_i^-1 u_i - u_bar))``
    over all N units. For a complete case the weight is
    ``pi_i^-1 rho'(lambda_2' (pi_i^-1 u_i - u_bar))`` divided by the scalar
    ``sum_j rho'(v_j)`` over all units; the first-order condition on the
    constant column of u then makes the weights sum to one. ``u`` must
    contain a constant column.
    """
    u = problem.u
    const = np.all(u == u[0], axis=0)
    if not np.any(const) or np.any(u[0, const] == 0):
        raise MissingConstantColumn("centered calibration needs a nonzero constant column in u")
    cc = problem.complete
    if cc.sum() < problem.q:
        raise TooFewCompleteCases("too few complete cases")
    rho = problem.rho
    A = problem.base_weights[:, None] * u - problem.u_bar
    s = A.std(axis=0)
    # a moment that vanishes for every unit (e.g. the constant column when
    # nothing is missing and pi = 1) holds for any lambda; leave it out
    active = s > 1e-12 * np.maximum(1.0, np.abs(problem.u_bar))
    A = np.ascontiguousarray(A[:, active] / s[active])
    w = np.full(problem.n, 1.0 / problem.n)
    if A.shape[1]:
        cholesky((A * w[:, None]).T @ A)
    crit = _criterion(A, w, rho, rho.lo, rho.hi)
    try:
        rep = maximize_concave(crit, np.zeros(A.shape[1]), tol=_newton_tol(tol, s[active]),
                                 max_iter=max_iter)
    except LineSearchStalled as exc:
        raise InfeasibleCalibration(f"{rho.name} (centered): {exc}") from None
    v_all = A @ rep.argmax
    d1_all = rho.derivs(v_all, max_order=1)[1]
    p = _gel_weights(problem, v_all[cc], normalizer=d1_all.sum())
    res = _residual(problem, p)
    if not _settled(rep) or np.max(np.abs(res)) > MOMENT_TOL:
        raise InfeasibleCalibration(
            f"{rho.name} (centered): no convergence, max moment residual {np.max(np.abs(res)):.3e}"
        )
    total = p.sum()
    if abs(total - 1.0) > 1e-6:
        warnings.warn(f"centered weights sum to {total:.8f}, not 1", WeightNormalizationWarning, stacklevel=2)
    return CalibrationResult(lambda_hat=_full_lambda(rep.argmax, s[active], active), weights=p,
                             moment_residual=res, restricted=False, newton=rep, method="centered",
                             rho_name=rho.name)


def weight_diagnostics(result: CalibrationResult, r=None) -> dict:
    """Summary of the complete-case weights.

    Zero-weight entries of non-respondents are excluded when ``r`` is given;
    otherwise every entry of ``result.weights`` is treated as a complete case.
    """
    p = result.weights if r is None else result.weights[np.asarray(r) == 1]
    s1 = p.sum()
    s2 = np.sum(p * p)
    return {
        "n_weights": int(p.size),
        "min_weight": float(p.min()),
        "max_weight": float(p.max()),
        "n_negative": int(np.sum(p < 0)),
        "sum_weights": float(s1),
        "effective_sample_size": float(s1 * s1 / s2) if s2 > 0 else 0.0,
        "max_abs_moment_residual": float(np.max(np.abs(result.moment_residual), initial=0.0)),
        "restricted": bool(result.restricted),
    }


def calibrate(u, r, pi, rho: RhoFunction | None = None, box: FeasibilityBox | None = DEFAULT_BOX,
              method: str = "gel") -> CalibrationResult:
    """Convenience front end: build the problem and dispatch on ``method``.

    ``method`` is "gel" (Newton), "closed-form" (quadratic only) or
    "centered".
    """
    problem = CalibrationProblem.build(u, r, pi, rho)
    if method == "gel":
        return solve_lambda(problem, box=box)
    if method == "closed-form":
        return solve_lambda_quadratic_closed_form(problem)
    if method == "centered":
        return solve_centered(problem)
    raise ValueError(f"unknown calibration method {method!r}")
