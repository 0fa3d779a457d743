"""Plug-in asymptotic variance and Wald intervals for the calibration estimator."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .data import ObservedSample
from .errors import ExtremePropensity
from .models import BestLinearPredictorFit, PropensityFit
from .numeric import solve_spd

EXTREME_PI = 1e-6


@dataclass(frozen=True, eq=False)
class VariancePlugin:
    m_tilde_hat: np.ndarray
    A2_hat: np.ndarray
    S_hat: np.ndarray
    variance: float
    terms: np.ndarray  # per-unit bracketed influence terms

    @property
    def se(self) -> float:
        return float(np.sqrt(self.variance))


def plugin_variance(sample: ObservedSample, propensity: PropensityFit, blp: BestLinearPredictorFit,
                    cal_estimate: float, y=None, a2_sign: float = 1.0) -> VariancePlugin:
    """Influence-function variance of the calibration estimator.

    With ``d = d pi / d beta`` per unit::

        A2 = N^-1 sum r pi^-2 d (y - m)
        S  = N^-1 sum pi^-1 (1 - pi)^-1 d d'
        m~ = m + A2' S^-1 (1 - pi)^-1 d
        var = N^-2 sum [r / pi (y - m~) + (m~ - mu)]^2

    ``y`` overrides the response (e.g. ``h(y)`` for another estimand).
    """
    pi = propensity.pi
    if np.any(pi < EXTREME_PI) or np.any(pi > 1 - EXTREME_PI):
        warnings.warn("propensities within 1e-6 of 0 or 1; the plug-in variance is unstable",
                      ExtremePropensity, stacklevel=2)
    n = sample.n
    r = sample.r.astype(float)
    yv = sample.y if y is None else np.asarray(y, dtype=float)
    yv = np.where(sample.complete, yv, 0.0)
    m = blp.m_hat
    d = propensity.dpi_dbeta()
    A2 = d.T @ (r / pi**2 * (yv - m)) / n
    S = (d / (pi * (1.0 - pi))[:, None]).T @ d / n
    S = 0.5 * (S + S.T)
    adj = d / (1.0 - pi)[:, None] @ solve_spd(S, A2)
    m_tilde = m + a2_sign * adj
    terms = r / pi * (yv - m_tilde) + (m_tilde - cal_estimate)
    var = float(terms @ terms) / n**2
    return VariancePlugin(m_tilde_hat=m_tilde, A2_hat=A2, S_hat=S, variance=var, terms=terms)


def normal_quantile(p: float) -> float:
    """Standard normal quantile."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    return float(ndtri(p))


def wald_ci(value: float, se: float, level: float = 0.95) -> tuple[float, float]:
    """``value -/+ z_{(1+level)/2} se``."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    if se < 0:
        raise ValueError("se must be non-negative")
    z = normal_quantile(0.5 * (1.0 + level))
    return value - z * se, value + z * se
