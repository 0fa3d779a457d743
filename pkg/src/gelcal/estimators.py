"""Point estimators of E(Y) and related functionals under missing responses."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .calibration import CalibrationResult
from .data import ObservedSample
from .errors import EmptyInterval, MaxIterations, SingularJacobian
from .models import PropensityFit


@dataclass(frozen=True)
class Estimate:
    value: float
    method: str
    se: float | None = None
    ci_lo: float | None = None
    ci_hi: float | None = None
    n_complete: int | None = None

    def __post_init__(self):
        if self.se is not None:
            if self.se < 0:
                raise ValueError("standard error must be non-negative")
            if self.ci_lo is None or self.ci_hi is None:
                raise ValueError("an estimate with a standard error needs a confidence interval")
        if self.ci_lo is not None and not (self.ci_lo <= self.value <= self.ci_hi):
            raise ValueError("confidence interval must bracket the estimate")

    def with_se(self, se: float, level: float = 0.95) -> "Estimate":
        from .inference import wald_ci

        lo, hi = wald_ci(self.value, se, level)
        return Estimate(self.value, self.method, float(se), lo, hi, self.n_complete)


MEAN = "mean"
TAIL = "tail"
GRID = "grid"


@dataclass(frozen=True)
class EstimandSpec:
    """A functional ``E h(Y)``.

    ``kind`` is "mean" (h(y) = y), "tail" (h(y) = I(y > threshold)) or
    "grid" (h tabulated on ``cutpoints`` and approximated by
    :func:`functional_grid_approx`).
    """

    kind: str = MEAN
    threshold: float | None = None
    h: Callable | None = None
    cutpoints: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind == TAIL and self.threshold is None:
            raise ValueError("tail probability needs a threshold")
        if self.kind == GRID:
            if self.h is None or self.cutpoints is None:
                raise ValueError("grid functional needs h and cutpoints")
            if np.any(np.diff(self.cutpoints) <= 0):
                raise ValueError("cutpoints must be strictly increasing")
        if self.kind not in (MEAN, TAIL, GRID):
            raise ValueError(f"unknown estimand kind {self.kind!r}")

    @property
    def label(self) -> str:
        if self.kind == TAIL:
            return f"P(y>{self.threshold:g})"
        if self.kind == GRID:
            return "E[h(y)]"
        return "mean"

    def h_values(self, y: np.ndarray) -> np.ndarray:
        if self.kind == MEAN:
            return y
        if self.kind == TAIL:
            return (y > self.threshold).astype(float)
        return np.asarray(self.h(y), dtype=float)


def _filled(sample: ObservedSample, values=None):
    v = sample.y if values is None else values
    return np.where(sample.complete, v, 0.0)


def estimate_ipw(sample: ObservedSample, propensity: PropensityFit, hajek: bool = False, h=None) -> Estimate:
    """``N^-1 sum r_i y_i / pi_i``; with ``hajek`` the divisor is ``sum r_i / pi_i``."""
    y = _filled(sample, None if h is None else h(sample.y))
    w = np.where(sample.complete, 1.0 / propensity.pi, 0.0)
    denom = w.sum() if hajek else sample.n
    return Estimate(float(w @ y / denom), "IPW-Hajek" if hajek else "IPW", n_complete=sample.n_complete)


def estimate_aipw(sample: ObservedSample, propensity: PropensityFit, m_hat) -> Estimate:
    """``N^-1 sum r y / pi - N^-1 sum (r - pi) / pi * m_hat``."""
    m_hat = np.asarray(m_hat, dtype=float)
    pi = propensity.pi
    r = sample.r
    y = _filled(sample)
    value = np.mean(r * y / pi) - np.mean((r - pi) / pi * m_hat)
    return Estimate(float(value), "AIPW", n_complete=sample.n_complete)


def estimate_ols(m_hat, n_complete: int | None = None) -> Estimate:
    """Mean of outcome-model predictions over all N units."""
    return Estimate(float(np.mean(m_hat)), "OLS", n_complete=n_complete)


def estimate_cal(sample: ObservedSample, calibration: CalibrationResult, h=None, method: str | None = None) -> Estimate:
    """``sum_i r_i p_i h(y_i)``; pass centered weights for the CAL2 variant."""
    y = _filled(sample, None if h is None else h(sample.y))
    tag = method or ("CAL2" if calibration.method == "centered" else "CAL")
    return Estimate(float(calibration.weights @ y), f"{tag},{calibration.rho_name}", n_complete=sample.n_complete)


def functional_grid_approx(h: Callable, cutpoints: Sequence[float], calibration: CalibrationResult,
                           sample: ObservedSample) -> Estimate:
    """Approximate ``E h(Y)`` by a Riemann-Stieltjes sum over calibrated interval masses.

    ``cutpoints`` are ``t_0 < ... < t_{M+1}``; the ends may be infinite.
    Each interval ``(t_m, t_{m+1}]`` contributes ``h(midpoint)`` times its
    calibrated mass. An interval with an infinite end uses its finite end
    as the evaluation point.
    """
    t = np.asarray(cutpoints, dtype=float)
    if t.size < 2 or np.any(np.diff(t) <= 0):
        raise ValueError("need at least two strictly increasing cutpoints")
    if not np.isfinite(t[1:-1]).all() or np.all(~np.isfinite(t)):
        raise ValueError("interior cutpoints must be finite")
    cc = sample.complete
    y = sample.y[cc]
    p = calibration.weights[cc]
    total = 0.0
    for m in range(t.size - 1):
        a, b = t[m], t[m + 1]
        if np.isfinite(a) and np.isfinite(b):
            point = 0.5 * (a + b)
        else:
            point = a if np.isfinite(a) else b
        mass = p[(y > a) & (y <= b)].sum()
        if mass == 0.0:
            warnings.warn(f"interval ({a:g}, {b:g}] carries no weighted mass", EmptyInterval, stacklevel=2)
        total += float(h(np.array(point))) * mass
    return Estimate(float(total), f"CAL-grid,{calibration.rho_name}", n_complete=sample.n_complete)


def multipurpose_estimate(sample: ObservedSample, calibration: CalibrationResult,
                          estimands: Sequence[EstimandSpec]) -> list[Estimate]:
    """Apply one common set of calibration weights to every estimand."""
    out = []
    for spec in estimands:
        if spec.kind == GRID:
            est = functional_grid_approx(spec.h, spec.cutpoints, calibration, sample)
        else:
            est = estimate_cal(sample, calibration, h=spec.h_values, method=f"CAL[{spec.label}]")
        out.append(est)
    return out


def solve_estimating_equation(sample: ObservedSample, calibration: CalibrationResult, g: Callable,
                              jacobian: Callable, theta0, tol: float = 1e-10,
                              max_iter: int = 100) -> list[Estimate]:
    """Root of ``sum_i r_i p_i g(y_i, x_i; theta)`` by Newton's method.

    ``g(y, x, theta)`` returns an (n, k) array for the n complete cases and
    ``jacobian(y, x, theta)`` an (n, k, k) array of d g / d theta. Only
    just-identified systems (k = dim theta) are supported; no standard
    errors are attached.
    """
    cc = sample.complete
    y, x, p = sample.y[cc], sample.x[cc], calibration.weights[cc]
    theta = np.atleast_1d(np.array(theta0, dtype=float))
    for _ in range(max_iter):
        k = theta.size
        G = p @ np.asarray(g(y, x, theta), dtype=float).reshape(len(y), k)
        if np.max(np.abs(G)) <= tol:
            break
        J = np.einsum("i,ijk->jk", p, np.asarray(jacobian(y, x, theta), dtype=float).reshape(len(y), k, k))
        if not np.all(np.isfinite(J)) or np.linalg.cond(J) > 1e12:
            raise SingularJacobian("estimating-equation Jacobian is singular")
        theta = theta - np.linalg.solve(J, G)
    else:
        raise MaxIterations(f"estimating equation not solved in {max_iter} iterations")
    return [Estimate(float(v), f"CAL-EE[{j}]", n_complete=sample.n_complete) for j, v in enumerate(theta)]
