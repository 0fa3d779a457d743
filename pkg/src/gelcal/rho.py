"""Normalized concave criterion functions for GEL calibration.

Every member is stored in normalized form, i.e. with first and second
derivatives equal to -1 at the origin. Derivatives are analytic per kind.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DegenerateRho, OutOfDomain, ThetaAtLimit

QUADRATIC = "quadratic"
EMPIRICAL_LIKELIHOOD = "el"
EXPONENTIAL_TILTING = "et"
POWER_DIVERGENCE = "cressie-read"
NORMALIZED = "normalized"

# integer codes consumed by the compiled kernels
KIND_CODES = {QUADRATIC: 0, EMPIRICAL_LIKELIHOOD: 1, EXPONENTIAL_TILTING: 2, POWER_DIVERGENCE: 3}


@dataclass(frozen=True)
class RhoFunction:
    """A normalized rho with its open domain ``(lo, hi)``.

    ``kind`` is one of the named family members; ``theta`` is only set for
    power-divergence members. Members built by :func:`normalize` keep the raw
    callable plus the argument/value rescaling.
    """

    kind: str
    theta: float | None = None
    lo: float = -math.inf
    hi: float = math.inf
    raw: Callable | None = field(default=None, compare=False, repr=False)
    arg_scale: float = 1.0
    value_scale: float = 1.0

    @property
    def code(self) -> int:
        return KIND_CODES.get(self.kind, -1)

    @property
    def name(self) -> str:
        if self.kind == POWER_DIVERGENCE:
            return f"{POWER_DIVERGENCE}:{self.theta:g}"
        return self.kind

    def in_domain(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return (v > self.lo) & (v < self.hi)

    def derivs(self, v, max_order: int = 2) -> list[np.ndarray]:
        """Values of rho and its derivatives up to ``max_order`` at ``v``.

        Vectorized; the caller is responsible for domain checks.
        """
        v = np.asarray(v, dtype=float)
        k = self.kind
        if k == QUADRATIC:
            out = [-0.5 * (v + 1.0) ** 2, -(v + 1.0), -np.ones_like(v), np.zeros_like(v)]
        elif k == EMPIRICAL_LIKELIHOOD:
            s = 1.0 - v
            out = [np.log(s), -1.0 / s, -1.0 / s**2, -2.0 / s**3]
        elif k == EXPONENTIAL_TILTING:
            e = -np.exp(v)
            out = [e, e, e, e]
        elif k == POWER_DIVERGENCE:
            t = self.theta
            s = 1.0 + t * v
            out = [
                -(s ** ((t + 1.0) / t)) / (t + 1.0),
                -(s ** (1.0 / t)),
                -(s ** (1.0 / t - 1.0)),
                -(1.0 - t) * s ** (1.0 / t - 2.0),
            ]
        else:
            a, c = self.arg_scale, self.value_scale
            out = [c * a**j * np.asarray(self.raw(a * v, j), dtype=float) for j in range(max_order + 1)]
        return out[: max_order + 1]


def evaluate(rho: RhoFunction, v: float, order: int = 0) -> float:
    """j-th derivative of the normalized ``rho`` at ``v`` (j = 0..3)."""
    if order not in (0, 1, 2, 3):
        raise ValueError(f"order must be 0..3, got {order}")
    if not rho.in_domain(v):
        raise OutOfDomain(f"v={v!r} outside the domain ({rho.lo}, {rho.hi}) of {rho.name}")
    return float(rho.derivs(v, max_order=order)[order])


def quadratic() -> RhoFunction:
    return RhoFunction(QUADRATIC)


def empirical_likelihood() -> RhoFunction:
    return RhoFunction(EMPIRICAL_LIKELIHOOD, hi=1.0)


def exponential_tilting() -> RhoFunction:
    return RhoFunction(EXPONENTIAL_TILTING)


def power_divergence(theta: float) -> RhoFunction:
    """Cressie-Read member ``-(1+theta v)^((theta+1)/theta)/(theta+1)``.

    Already normalized for every admissible ``theta``; the domain is
    ``1 + theta v > 0``. ``theta`` in {0, -1} are the exponential-tilting and
    empirical-likelihood limits and must be requested by name.
    """
    theta = float(theta)
    if theta == 0.0 or theta == -1.0:
        raise ThetaAtLimit(f"theta={theta:g} is a limiting case; use the 'et' or 'el' kinds")
    if not math.isfinite(theta):
        raise ValueError("theta must be finite")
    if theta > 0:
        lo, hi = -1.0 / theta, math.inf
    else:
        lo, hi = -math.inf, -1.0 / theta
    return RhoFunction(POWER_DIVERGENCE, theta=theta, lo=lo, hi=hi)


def normalize(raw: Callable, domain: tuple[float, float] = (-math.inf, math.inf)) -> RhoFunction:
    """Rescale an arbitrary concave ``raw`` so both derivatives at 0 are -1.

    ``raw(v, j)`` must return the j-th derivative of the raw function at v for
    j = 0..3; ``domain`` is the raw function's open domain and must contain 0.
    """
    d1 = float(raw(0.0, 1))
    d2 = float(raw(0.0, 2))
    if d1 == 0.0 or d2 == 0.0:
        raise DegenerateRho(f"raw derivatives at 0 must be nonzero (got {d1:g}, {d2:g})")
    a = d1 / d2
    c = -d2 / d1**2
    lo, hi = domain
    ends = sorted([lo / a, hi / a])
    return RhoFunction(NORMALIZED, lo=ends[0], hi=ends[1], raw=raw, arg_scale=a, value_scale=c)


def from_name(name: str) -> RhoFunction:
    """Parse a command-line rho name: quadratic, el, et or cressie-read:<theta>."""
    key = name.strip().lower()
    if key in ("quadratic", "q"):
        return quadratic()
    if key in ("el", "empirical-likelihood"):
        return empirical_likelihood()
    if key in ("et", "exponential-tilting"):
        return exponential_tilting()
    if key.startswith(POWER_DIVERGENCE + ":"):
        try:
            theta = float(key.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad cressie-read parameter in {name!r}") from None
        return power_divergence(theta)
    raise ValueError(f"unknown rho {name!r}; expected quadratic, el, et or cressie-read:<theta>")
