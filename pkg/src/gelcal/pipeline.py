"""Declarative estimator specifications evaluated on one sample.

An :class:`EstimatorSpec` names everything needed to produce one estimate
(propensity formula, working-model formulas, calibration basis, rho, box,
estimand). :func:`evaluate_grid` runs a list of specs on a sample and shares
fitted models and calibration weights between specs that agree on them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .calibration import DEFAULT_BOX, CalibrationResult, calibrate
from .data import ObservedSample
from .errors import GelcalError
from .estimators import MEAN, Estimate, EstimandSpec, estimate_aipw, estimate_cal, estimate_ipw, estimate_ols
from .inference import plugin_variance
from .models import PREDICTIONS, PropensityFit, WorkingModelSet, fit_best_linear_predictor, \
    fit_logistic_propensity, fit_working_model
from .rho import from_name

KINDS = ("ipw", "hajek", "aipw", "ols", "cal", "cal2", "oracle")


@dataclass(frozen=True)
class EstimatorSpec:
    """One row of an estimator grid.

    ``kind`` is one of ``ipw``, ``hajek``, ``aipw``, ``ols``, ``cal``,
    ``cal2`` (centered weights) or ``oracle`` (returns the known truth; used
    to check the harness). ``aipw`` and ``ols`` use the first working model.
    ``group`` ties a row to the reference IPW/OLS rows used for relative
    efficiency. ``se_weighted_projection=False`` fits the projection inside
    the plug-in variance by unweighted complete-case least squares.
    """

    name: str
    kind: str = "cal"
    propensity: str | None = None
    working: tuple[str, ...] = ()
    basis: str = PREDICTIONS
    rho: str = "quadratic"
    box: bool = True
    estimand: EstimandSpec = field(default_factory=EstimandSpec)
    with_se: bool = False
    group: str = ""
    se_weighted_projection: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}")
        if self.kind in ("ipw", "hajek", "aipw", "cal", "cal2") and self.propensity is None:
            raise ValueError(f"{self.name}: {self.kind} needs a propensity formula")
        if self.kind in ("aipw", "ols", "cal", "cal2") and not self.working:
            raise ValueError(f"{self.name}: {self.kind} needs at least one working model")
        if self.estimand.kind not in (MEAN, "tail"):
            raise ValueError("grid estimators support mean and tail estimands")
        object.__setattr__(self, "working", tuple(self.working))


class SampleContext:
    """Per-sample cache of fitted models and calibration weights."""

    def __init__(self, sample: ObservedSample):
        self.sample = sample
        self._cache: dict = {}

    def _get(self, key, make):
        if key not in self._cache:
            self._cache[key] = make()
        return self._cache[key]

    def propensity(self, formula: str) -> PropensityFit:
        s = self.sample
        if s.n_complete == s.n:
            # nothing is missing: every unit is observed with certainty
            return self._get(("pi", None), lambda: PropensityFit.known(np.ones(s.n)))
        return self._get(("pi", formula), lambda: fit_logistic_propensity(s, formula))

    def working(self, formula: str):
        return self._get(("m", formula), lambda: fit_working_model(self.sample, formula))

    def working_set(self, formulas, basis) -> WorkingModelSet:
        return self._get(("u", formulas, basis),
                         lambda: WorkingModelSet.from_models([self.working(f) for f in formulas], basis))

    def calibration(self, spec: EstimatorSpec) -> CalibrationResult:
        key = ("cal", spec.kind, spec.propensity, spec.working, spec.basis, spec.rho, spec.box)

        def make():
            ps = self.propensity(spec.propensity)
            u = self.working_set(spec.working, spec.basis).u
            if spec.kind == "cal2":
                u = np.column_stack([np.ones(self.sample.n), u])
                return calibrate(u, self.sample.r, ps.pi, from_name(spec.rho), method="centered")
            return calibrate(u, self.sample.r, ps.pi, from_name(spec.rho), box=DEFAULT_BOX if spec.box else None)

        return self._get(key, make)


def _evaluate(ctx: SampleContext, spec: EstimatorSpec, truth: float | None) -> Estimate:
    s = ctx.sample
    est = spec.estimand
    h = None if est.kind == MEAN else est.h_values
    if spec.kind == "oracle":
        if truth is None:
            raise ValueError("oracle estimator needs a known truth")
        return Estimate(float(truth), "oracle", n_complete=s.n_complete)
    if spec.kind in ("ipw", "hajek"):
        return estimate_ipw(s, ctx.propensity(spec.propensity), hajek=spec.kind == "hajek", h=h)
    if spec.kind == "ols":
        return estimate_ols(ctx.working(spec.working[0]).predictions, s.n_complete)
    if spec.kind == "aipw":
        ps = ctx.propensity(spec.propensity)
        m = ctx.working(spec.working[0]).predictions
        if h is None:
            return estimate_aipw(s, ps, m)
        hs = ObservedSample(np.where(s.complete, h(s.y), np.nan), s.r, s.x, s.column_names)
        return estimate_aipw(hs, ps, m)
    cal = ctx.calibration(spec)
    value = estimate_cal(s, cal, h=h)
    if spec.with_se and spec.kind == "cal" and s.n_complete < s.n:
        ps = ctx.propensity(spec.propensity)
        u = ctx.working_set(spec.working, spec.basis).u
        yh = s.y if h is None else h(s.y)
        hs = ObservedSample(np.where(s.complete, yh, np.nan), s.r, s.x, s.column_names)
        blp = fit_best_linear_predictor(hs, u, ps, weighted=spec.se_weighted_projection)
        vp = plugin_variance(s, ps, blp, value.value, y=yh)
        value = value.with_se(vp.se)
    return value


def evaluate_grid(sample: ObservedSample, grid, truths=None, quiet: bool = True, strict: bool = False,
                  context: SampleContext | None = None):
    """Evaluate every spec on ``sample``.

    Returns a list with one :class:`Estimate` or one :class:`GelcalError`
    per spec; a failing estimator never aborts the others unless ``strict``
    is set, in which case the first error propagates. ``truths`` maps an
    estimand label to its known value (needed only by oracle rows). Pass
    ``context`` to reuse (and afterwards inspect) the fitted models.
    Standard errors are attached only when some responses are missing.
    """
    ctx = context if context is not None else SampleContext(sample)
    out = []
    with warnings.catch_warnings():
        if quiet:
            warnings.simplefilter("ignore")
        for spec in grid:
            truth = None if truths is None else truths.get(spec.estimand.label)
            try:
                out.append(_evaluate(ctx, spec, truth))
            except GelcalError as exc:
                if strict:
                    raise
                out.append(exc)
    return out
