"""Propensity and working outcome-regression models."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .data import ObservedSample
from .errors import (
    LineSearchStalled,
    NotPositiveDefinite,
    RankDeficient,
    Separation,
    SeparationWarning,
    TooFewCompleteCases,
)
from .formula import FormulaSpec, parse_formula
from .numeric import cholesky, maximize_concave, solve_spd

SEPARATION_EPS = 1e-8
CAPPED_ITER = 25
_STD_TOL = 1e-12


def _as_formula(f) -> FormulaSpec:
    return parse_formula(f) if isinstance(f, str) else f


def _standardize(F):
    """Center and scale all but the leading intercept column.

    Returns the transformed design and the ``(means, scales)`` needed to map
    coefficients back. A non-intercept column with zero spread is rank
    deficient against the intercept.
    """
    m = F[:, 1:].mean(axis=0)
    s = F[:, 1:].std(axis=0)
    if np.any(s <= 1e-12 * np.maximum(1.0, np.abs(m))):
        raise RankDeficient("design column is constant (collinear with the intercept)")
    Fs = F.copy()
    Fs[:, 1:] = (F[:, 1:] - m) / s
    return Fs, m, s


def _unstandardize(b, m, s):
    beta = np.empty_like(b)
    beta[1:] = b[1:] / s
    beta[0] = b[0] - np.sum(b[1:] * m / s)
    return beta


def _check_rank(Fs, what):
    try:
        cholesky(Fs.T @ Fs / Fs.shape[0])
    except NotPositiveDefinite:
        raise RankDeficient(f"{what} design is not of full column rank") from None


def _logistic_newton(F, r):
    """Maximum-likelihood logistic coefficients of ``r`` on design ``F``."""
    n = F.shape[0]
    if np.all(r == r[0]):
        raise Separation(f"response is constant ({int(r[0])}); no finite MLE")
    Fs, m, s = _standardize(F)
    _check_rank(Fs, "logistic")
    Fs = np.ascontiguousarray(Fs)
    rf = np.ascontiguousarray(r, dtype=float)

    def objective(b):
        ll, score, H, _ = _kernels.logistic_accumulate(Fs, rf, b)
        return ll / n, score / n, H / n

    try:
        rep = maximize_concave(objective, np.zeros(F.shape[1]), tol=_STD_TOL, max_iter=60)
    except (LineSearchStalled, NotPositiveDefinite) as exc:
        raise Separation(f"logistic Newton iteration broke down: {exc}") from None
    beta = _unstandardize(rep.argmax, m, s)
    eta = F @ beta
    pi = 0.5 * (1.0 + np.tanh(0.5 * eta))
    if not rep.converged:
        raise Separation("logistic likelihood has no finite maximizer (quasi-complete separation)")
    if np.all(np.abs(r - pi) < SEPARATION_EPS):
        raise Separation("fitted probabilities reproduce the response exactly (complete separation)")
    return beta, pi, rep


def _logistic_capped(F, r, max_iter=CAPPED_ITER):
    """Plain Newton-Raphson for ``max_iter`` steps without a convergence check.

    Used for working outcome models whose binary response is separable:
    the MLE does not exist but the capped iterate still yields usable
    (near 0/1) predictions.
    """
    n = F.shape[0]
    Fs, m, s = _standardize(F)
    Fs = np.ascontiguousarray(Fs)
    rf = np.ascontiguousarray(r, dtype=float)
    b = np.zeros(F.shape[1])
    for _ in range(max_iter):
        _, score, H, _ = _kernels.logistic_accumulate(Fs, rf, b)
        try:
            step = solve_spd(-H / n, score / n)
        except NotPositiveDefinite:
            break
        if not np.all(np.isfinite(step)):
            break
        b = b + step
    return _unstandardize(b, m, s)


@dataclass(frozen=True, eq=False)
class PropensityFit:
    """Fitted logistic missingness model ``pi(x; beta)``."""

    beta: np.ndarray
    pi: np.ndarray
    score_norm: float
    design_columns: tuple[str, ...]
    features: np.ndarray = field(repr=False)
    formula: FormulaSpec | None = None

    def dpi_dbeta(self) -> np.ndarray:
        """N x p matrix of d pi / d beta; for the logit link pi (1 - pi) f."""
        return (self.pi * (1.0 - self.pi))[:, None] * self.features

    @classmethod
    def known(cls, pi, features=None):
        """Wrap known propensities (e.g. a design with pi fixed by construction)."""
        pi = np.asarray(pi, dtype=float)
        if features is None:
            features = np.ones((pi.shape[0], 1))
        return cls(beta=np.zeros(features.shape[1]), pi=pi, score_norm=0.0,
                   design_columns=tuple(f"f{j}" for j in range(features.shape[1])), features=features)


def fit_logistic_propensity(sample: ObservedSample, feature_map) -> PropensityFit:
    """Logistic regression of the nonmissing indicator on the formula's terms.

    The formula's response is ignored (conventionally ``r``).
    """
    spec = _as_formula(feature_map)
    F, names = spec.design(sample)
    r = sample.r.astype(float)
    beta, pi, _ = _logistic_newton(F, r)
    score = F.T @ (r - pi) / sample.n
    return PropensityFit(beta=beta, pi=pi, score_norm=float(np.max(np.abs(score))),
                         design_columns=tuple(names), features=F, formula=spec)


@dataclass(frozen=True, eq=False)
class WorkingModel:
    """One fitted working outcome model with predictions for all N units."""

    kind: str  # "ols" | "logistic"
    coef: np.ndarray
    predictions: np.ndarray
    feature_names: tuple[str, ...]
    formula: FormulaSpec | None = None
    design: np.ndarray | None = field(default=None, repr=False)

    def predict(self, sample) -> np.ndarray:
        F, _ = self.formula.design(sample)
        eta = F @ self.coef
        if self.kind == "logistic":
            return 0.5 * (1.0 + np.tanh(0.5 * eta))
        return eta


def weighted_least_squares(F, y, w=None):
    """Least-squares coefficients of ``y`` on ``F`` (intercept first), optional weights."""
    n, p = F.shape
    if n < p:
        raise TooFewCompleteCases(f"{n} rows for {p} coefficients")
    w = np.ones(n) if w is None else np.asarray(w, dtype=float)
    if p == 1:
        return np.array([np.sum(w * y) / np.sum(w)])
    Fs, m, s = _standardize(F)
    G = (Fs * w[:, None]).T @ Fs / n
    try:
        b = solve_spd(G, Fs.T @ (w * y) / n)
    except NotPositiveDefinite:
        raise RankDeficient("least-squares design is not of full column rank") from None
    return _unstandardize(b, m, s)


def fit_working_ols(sample: ObservedSample, feature_map) -> WorkingModel:
    """OLS of the formula's response on its terms using complete cases only."""
    spec = _as_formula(feature_map)
    F, names = spec.design(sample)
    cc = sample.complete
    if cc.sum() < F.shape[1]:
        raise TooFewCompleteCases(f"{int(cc.sum())} complete cases for {F.shape[1]} coefficients")
    y = spec.response_values(sample)
    coef = weighted_least_squares(F[cc], y[cc])
    return WorkingModel("ols", coef, F @ coef, tuple(names), spec, F)


def fit_working_logistic(sample: ObservedSample, feature_map, threshold: float | None = None) -> WorkingModel:
    """Logistic working model for P(y > c | x) fitted on complete cases.

    The binary response is the formula's indicator response, or
    ``I(y > threshold)`` when ``threshold`` is given.
    """
    spec = _as_formula(feature_map)
    F, names = spec.design(sample)
    cc = sample.complete
    if threshold is not None:
        z = (sample.y[cc] > threshold).astype(float)
    elif spec.is_indicator:
        z = spec.response_values(sample)[cc]
    else:
        raise ValueError("need an indicator response I(y>c) or an explicit threshold")
    if cc.sum() < F.shape[1]:
        raise TooFewCompleteCases(f"{int(cc.sum())} complete cases for {F.shape[1]} coefficients")
    try:
        coef, _, _ = _logistic_newton(F[cc], z)
    except Separation as exc:
        if np.all(z == z[0]):
            raise
        warnings.warn(f"working logistic model {spec}: {exc}; using the {CAPPED_ITER}-step Newton iterate",
                      SeparationWarning, stacklevel=2)
        coef = _logistic_capped(F[cc], z)
    pred = 0.5 * (1.0 + np.tanh(0.5 * (F @ coef)))
    return WorkingModel("logistic", coef, pred, tuple(names), spec, F)


def fit_working_model(sample: ObservedSample, formula) -> WorkingModel:
    """OLS for a plain response, logistic for an ``I(...)`` response."""
    spec = _as_formula(formula)
    if spec.is_indicator:
        return fit_working_logistic(sample, spec)
    return fit_working_ols(sample, spec)


PREDICTIONS = "predictions"
TERMS = "terms"


@dataclass(frozen=True, eq=False)
class WorkingModelSet:
    """q calibration functions derived from fitted working models.

    With ``basis="predictions"`` each model contributes its fitted values
    (one column per model). With ``basis="terms"`` the set calibrates on the
    union of the models' non-intercept design columns; the fitted values of
    every linear working model lie in that span, so robustness carries over
    while the weights no longer depend on the fitted coefficients. Terms
    shared by several models enter once.
    """

    models: tuple[WorkingModel, ...]
    u: np.ndarray
    labels: tuple[str, ...] = ()
    basis: str = PREDICTIONS

    @classmethod
    def from_models(cls, models, basis: str = PREDICTIONS) -> "WorkingModelSet":
        models = tuple(models)
        if not models:
            raise ValueError("need at least one working model")
        if basis == PREDICTIONS:
            u = np.column_stack([m.predictions for m in models])
            labels = tuple(str(m.formula) if m.formula is not None else f"m{j + 1}" for j, m in enumerate(models))
        elif basis == TERMS:
            cols, labels = [], []
            for m in models:
                if m.design is None:
                    raise ValueError("term basis needs models that keep their design matrix")
                for j, name in enumerate(m.feature_names[1:], start=1):
                    if name not in labels:
                        labels.append(name)
                        cols.append(m.design[:, j])
            if not cols:
                raise RankDeficient("term basis is empty (intercept-only models)")
            u = np.column_stack(cols)
            labels = tuple(labels)
        else:
            raise ValueError(f"unknown basis {basis!r}")
        uc = u - u.mean(axis=0)
        sd = uc.std(axis=0)
        if np.any(sd == 0):
            raise RankDeficient("a calibration function is constant")
        try:
            cholesky((uc / sd).T @ (uc / sd) / u.shape[0])
        except NotPositiveDefinite:
            raise RankDeficient("calibration functions are collinear") from None
        return cls(models, u, labels, basis)

    @property
    def q(self) -> int:
        return self.u.shape[1]


def fit_working_set(sample: ObservedSample, formulas, basis: str = PREDICTIONS) -> WorkingModelSet:
    return WorkingModelSet.from_models([fit_working_model(sample, f) for f in formulas], basis)


@dataclass(frozen=True, eq=False)
class BestLinearPredictorFit:
    """``m(x) = c0 + sum_j c_j u_j(x)``."""

    c: np.ndarray
    m_hat: np.ndarray


def fit_best_linear_predictor(sample: ObservedSample, working, propensity: PropensityFit | None = None,
                              weighted: bool = True) -> BestLinearPredictorFit:
    """Regress y on (1, u) over complete cases.

    With ``weighted`` (the default) each complete case gets weight 1/pi; set
    ``weighted=False`` for unweighted complete-case least squares.
    """
    u = working.u if isinstance(working, WorkingModelSet) else np.asarray(working, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    cc = sample.complete
    if cc.sum() < u.shape[1] + 1:
        raise TooFewCompleteCases("need at least q+1 complete cases")
    D = np.column_stack([np.ones(sample.n), u])
    w = None
    if weighted:
        if propensity is None:
            raise ValueError("weighted best linear predictor needs a propensity fit")
        w = 1.0 / propensity.pi[cc]
    c = weighted_least_squares(D[cc], sample.y[cc], w)
    return BestLinearPredictorFit(c=c, m_hat=D @ c)
