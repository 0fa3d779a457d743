"""Small dense linear algebra and a damped Newton maximizer."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from .errors import LineSearchStalled, NotPositiveDefinite

# pivots below this fraction of the largest diagonal entry count as zero
PIVOT_RTOL = 1e-12
ARMIJO = 1e-4
MIN_STEP = 1e-14
STALL_STEPS = 3


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor; raises NotPositiveDefinite on a non-positive pivot."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    scale = np.max(np.abs(a)) if a.size else 1.0
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-10 * max(scale, 1e-300):
        raise ValueError("matrix is not symmetric")
    try:
        low = linalg.cholesky(a, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"Cholesky factorization failed: {exc}") from None
    piv = np.diag(low) ** 2
    dmax = np.max(np.diag(a)) if a.size else 0.0
    if a.size and (dmax <= 0 or np.min(piv) <= PIVOT_RTOL * dmax):
        raise NotPositiveDefinite(
            f"pivot {np.min(piv):.3e} is numerically zero relative to diagonal scale {dmax:.3e}"
        )
    return low


def solve_spd(a, b) -> np.ndarray:
    """Solve ``a x = b`` for symmetric positive-definite ``a``."""
    low = cholesky(a)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != low.shape[0]:
        raise ValueError(f"dimension mismatch: {low.shape} vs {b.shape}")
    return linalg.cho_solve((low, True), b, check_finite=False)


@dataclass
class NewtonReport:
    argmax: np.ndarray
    objective_value: float
    iterations: int
    gradient_norm: float
    converged: bool
    history: list[float] = field(default_factory=list, repr=False)
    stalled: bool = False


def maximize_concave(
    objective: Callable,
    start,
    feasible: Callable | None = None,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> NewtonReport:
    """Damped Newton ascent for a smooth concave objective.

    ``objective(x)`` returns ``(value, gradient, hessian)`` and may return
    ``None`` to signal that ``x`` lies outside its domain. ``feasible(x)`` is
    an optional extra predicate; trial points failing either check are
    rejected and the step is halved. Convergence is declared when the
    max-norm of the gradient is at most ``tol``. A non-converged report is
    returned (not raised) when ``max_iter`` is exhausted.

    Steps are accepted under the Armijo rule. Close to the optimum the
    predicted increase can drop below the rounding noise of the objective;
    in that regime a full step is also accepted when it shrinks the gradient
    and changes the value only at rounding level. When ``STALL_STEPS``
    consecutive steps change neither the value (beyond rounding) nor the best
    gradient norm, the iterate sits at the floating-point floor of the
    gradient; the loop stops with ``stalled=True`` and ``converged=False``.
    """
    x = np.array(start, dtype=float)
    if feasible is not None and not feasible(x):
        raise ValueError("start point violates the feasibility predicate")
    cur = objective(x)
    if cur is None:
        raise ValueError("start point is outside the objective's domain")
    f, g, H = cur
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    history = [f]
    it = 0
    best, flat = gnorm, 0
    while gnorm > tol and it < max_iter and flat < STALL_STEPS:
        it += 1
        step = solve_spd(-H, g)
        slope = float(g @ step)
        noise = 64 * np.finfo(float).eps * (1.0 + abs(f))
        t = 1.0
        while True:
            x_new = x + t * step
            ok = feasible is None or feasible(x_new)
            trial = objective(x_new) if ok else None
            if trial is not None:
                f_new, g_new, H_new = trial
                if f_new >= f + ARMIJO * t * slope:
                    break
                gnew_norm = float(np.max(np.abs(g_new)))
                if t == 1.0 and abs(f_new - f) <= noise and gnew_norm < gnorm:
                    break
            t *= 0.5
            if t < MIN_STEP:
                raise LineSearchStalled(
                    f"step size underflow at iteration {it} (gradient norm {gnorm:.3e})"
                )
        flat = flat + 1 if abs(f_new - f) <= noise else 0
        x, f, g, H = x_new, f_new, g_new, H_new
        gnorm = float(np.max(np.abs(g)))
        history.append(f)
        if gnorm < best:
            best, flat = gnorm, 0
    return NewtonReport(
        argmax=x,
        objective_value=float(f),
        iterations=it,
        gradient_norm=gnorm,
        converged=gnorm <= tol,
        history=history,
        stalled=gnorm > tol and flat >= STALL_STEPS,
    )
