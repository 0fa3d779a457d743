"""Kang-Schafer scenario, Monte Carlo driver and the resampling-study protocol.

Replicate ``k`` of a study draws from its own Philox stream seeded with
``base_seed + k``; normal variates come from the inverse normal CDF applied
to open-interval uniforms, so each replicate is a fixed function of its
seed. Replicates run on a process pool and are reduced in index order, which
makes every metric table independent of the degree of parallelism.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import multiprocessing

import numpy as np
from scipy import integrate
from scipy.special import expit, ndtr, ndtri

from .data import FullSample, ObservedSample
from .estimators import MEAN, TAIL, EstimandSpec
from .formula import parse_formula
from .models import PREDICTIONS, TERMS
from .pipeline import EstimatorSpec, evaluate_grid

Z_NAMES = ("z1", "z2", "z3", "z4")
X_NAMES = ("x1", "x2", "x3", "x4")
KS_COLUMNS = Z_NAMES + X_NAMES
KS_MEAN = 210.0
KS_COEF = np.array([27.4, 13.7, 13.7, 13.7])
KS_ETA = np.array([-1.0, 0.5, -0.25, -0.1])
INTERACTION_COEF = 20.0
TAIL_THRESHOLD = 240.0


# random numbers ---------------------------------------------------------------

def replicate_rng(seed: int) -> np.random.Generator:
    """Counter-based generator for one replicate."""
    if seed < 0:
        raise ValueError("seeds must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def open_uniforms(rng: np.random.Generator, shape) -> np.ndarray:
    """Uniforms on the open interval (0, 1) with 53 random bits each."""
    k = rng.integers(0, 2**53, size=shape, dtype=np.int64)
    return (k + 0.5) / 2.0**53


# Kang-Schafer design ------------------------------------------------------------

@dataclass(frozen=True)
class KangSchaferConfig:
    n: int
    interaction: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")


@dataclass(frozen=True, eq=False)
class ScenarioReplicate:
    full: FullSample
    observed: ObservedSample
    interaction: bool = False

    def truth(self, estimand: EstimandSpec) -> float:
        return kang_schafer_truth(estimand, self.interaction)


def kang_schafer_covariates(z: np.ndarray) -> np.ndarray:
    """The four nonlinear transforms of Z observed in the misspecified design."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    z1, z2, z3, z4 = z.T
    return np.column_stack([
        np.exp(z1 / 2.0),
        z2 / (1.0 + np.exp(z1)),
        (z1 * z3 / 25.0 + 0.6) ** 3,
        (z2 + z4 + 20.0) ** 2,
    ])


def kang_schafer_mean(z: np.ndarray, interaction: bool = False) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z, dtype=float))
    mu = KS_MEAN + z @ KS_COEF
    if interaction:
        mu = mu + INTERACTION_COEF * z[:, 0] * z[:, 1]
    return mu


def kang_schafer_propensity(z: np.ndarray) -> np.ndarray:
    return expit(np.atleast_2d(np.asarray(z, dtype=float)) @ KS_ETA)


def generate_kang_schafer(config: KangSchaferConfig) -> ScenarioReplicate:
    """One data set of size ``config.n`` from the Kang-Schafer design.

    Each row consumes six uniforms: four for Z, one for the outcome noise and
    one for the response indicator.
    """
    u = open_uniforms(replicate_rng(config.seed), (config.n, 6))
    z = ndtri(u[:, :4])
    y = kang_schafer_mean(z, config.interaction) + ndtri(u[:, 4])
    r = (u[:, 5] < kang_schafer_propensity(z)).astype(np.int64)
    full = FullSample(y, np.column_stack([z, kang_schafer_covariates(z)]), KS_COLUMNS)
    return ScenarioReplicate(full, ObservedSample.from_full(full, r), config.interaction)


def kang_schafer_truth(estimand: EstimandSpec, interaction: bool = False) -> float:
    """Population value of a mean or tail-probability estimand."""
    if estimand.kind == MEAN:
        return KS_MEAN
    if estimand.kind != TAIL:
        raise ValueError("only mean and tail estimands have a closed-form truth")
    c = estimand.threshold - KS_MEAN
    if not interaction:
        sd = math.sqrt(1.0 + float(KS_COEF @ KS_COEF))
        return float(ndtr(-c / sd))
    # given Z1 the outcome is normal; integrate over Z1
    b = KS_COEF

    def cond(z1):
        sd = math.sqrt(1.0 + (b[1] + INTERACTION_COEF * z1) ** 2 + b[2] ** 2 + b[3] ** 2)
        return ndtr(-(c - b[0] * z1) / sd) * math.exp(-0.5 * z1 * z1) / math.sqrt(2 * math.pi)

    val, _ = integrate.quad(cond, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-12)
    return float(val)


# Monte Carlo driver ---------------------------------------------------------------

@dataclass(frozen=True)
class McMetrics:
    """Monte Carlo summary of one estimator.

    ``sse`` uses the n-1 divisor, so ``rmse**2 == bias**2 +
    sse**2 * (n_reps - 1) / n_reps`` up to rounding. ``see`` is the mean
    standard error estimate and ``coverage`` the fraction of intervals
    covering the truth (both None without standard errors).
    """

    name: str
    group: str
    estimand: str
    truth: float
    bias: float
    sse: float
    rmse: float
    re_rmse_vs_ols: float | None
    re_mse_vs_ipw: float | None
    rb_percent: float
    see: float | None
    coverage: float | None
    n_reps: int
    failed_reps: int


METRIC_COLUMNS = ("name", "group", "estimand", "truth", "bias", "sse", "rmse", "re_rmse_vs_ols",
                  "re_mse_vs_ipw", "rb_percent", "see", "coverage", "n_reps", "failed_reps")


@dataclass(frozen=True, eq=False)
class McTable:
    """Metrics plus the raw per-replicate values they were computed from."""

    title: str
    grid: tuple[EstimatorSpec, ...]
    metrics: tuple[McMetrics, ...]
    estimates: np.ndarray  # n_reps x n_estimators, NaN where failed
    ses: np.ndarray
    base_seed: int
    n_reps: int

    def row(self, name: str, group: str | None = None) -> McMetrics:
        for m in self.metrics:
            if m.name == name and (group is None or m.group == group):
                return m
        raise KeyError(name if group is None else f"{group}/{name}")

    def column(self, name: str, group: str | None = None) -> np.ndarray:
        for j, (s, m) in enumerate(zip(self.grid, self.metrics)):
            if m.name == name and (group is None or m.group == group):
                return self.estimates[:, j]
        raise KeyError(name)


def _summarize(vals, ses, truth, spec: EstimatorSpec) -> dict:
    ok = ~np.isnan(vals)
    v = vals[ok]
    k = int(ok.sum())
    if k == 0:
        nan = float("nan")
        return dict(bias=nan, sse=nan, rmse=nan, mse=nan, see=None, coverage=None, n_reps=0,
                    failed_reps=int(vals.size), rb_percent=nan)
    err = v - truth
    bias = float(np.mean(err))
    mse = float(np.mean(err * err))
    sse = float(np.std(v, ddof=1)) if k > 1 else 0.0
    see = coverage = None
    if spec.with_se and spec.kind == "cal":
        s = ses[ok]
        see = float(np.mean(s))
        from .inference import normal_quantile

        zq = normal_quantile(0.975)
        coverage = float(np.mean(np.abs(err) <= zq * s))
    rb = float(100.0 * bias / truth) if truth != 0 else float("nan")
    return dict(bias=bias, sse=sse, rmse=math.sqrt(mse), mse=mse, see=see, coverage=coverage, n_reps=k,
                failed_reps=int(vals.size - k), rb_percent=rb)


def summarize(title, grid, estimates, ses, truths, base_seed) -> McTable:
    """Reduce a replicate-by-estimator array to :class:`McMetrics` rows."""
    grid = tuple(grid)
    stats = [_summarize(estimates[:, j], ses[:, j], truths[j], s) for j, s in enumerate(grid)]

    def ref(j, kind):
        s = grid[j]
        for i, t in enumerate(grid):
            if t.kind == kind and t.group == s.group and t.estimand == s.estimand:
                return stats[i]
        return None

    rows = []
    for j, (s, st) in enumerate(zip(grid, stats)):
        ols, ipw = ref(j, "ols"), ref(j, "ipw")
        re_ols = st["rmse"] / ols["rmse"] if ols and ols["rmse"] > 0 else None
        re_ipw = st["mse"] / ipw["mse"] if ipw and ipw["mse"] > 0 else None
        rows.append(McMetrics(
            name=s.name, group=s.group, estimand=s.estimand.label, truth=float(truths[j]),
            bias=st["bias"], sse=st["sse"], rmse=st["rmse"], re_rmse_vs_ols=re_ols, re_mse_vs_ipw=re_ipw,
            rb_percent=st["rb_percent"], see=st["see"], coverage=st["coverage"], n_reps=st["n_reps"],
            failed_reps=st["failed_reps"],
        ))
    return McTable(title, grid, tuple(rows), estimates, ses, base_seed, estimates.shape[0])


@dataclass(frozen=True)
class KangSchaferSource:
    """Replicate factory for the Kang-Schafer design."""

    n: int
    interaction: bool = False

    def draw(self, seed: int):
        rep = generate_kang_schafer(KangSchaferConfig(self.n, self.interaction, seed))
        return rep.observed

    def truth(self, estimand: EstimandSpec) -> float:
        return kang_schafer_truth(estimand, self.interaction)


@dataclass(frozen=True, eq=False)
class ResampleSource:
    """Replicate factory that masks a fixed full sample by a known missingness model."""

    full: FullSample
    formula: str
    coef: tuple[float, ...]

    def probabilities(self) -> np.ndarray:
        spec = parse_formula(self.formula)
        F, _ = spec.design(self.full.observed())
        beta = np.asarray(self.coef, dtype=float)
        if beta.shape != (F.shape[1],):
            raise ValueError(f"missingness model has {F.shape[1]} coefficients, got {beta.size}")
        return expit(F @ beta)

    def draw(self, seed: int):
        pi = self.probabilities()
        u = open_uniforms(replicate_rng(seed), (self.full.n,))
        r = (u < pi).astype(np.int64)
        return ObservedSample.from_full(self.full, r)

    def truth(self, estimand: EstimandSpec) -> float:
        return float(np.mean(estimand.h_values(self.full.y)))


def _run_block(args):
    source, grid, seeds = args
    truths = {s.estimand.label: source.truth(s.estimand) for s in grid}
    vals = np.full((len(seeds), len(grid)), np.nan)
    ses = np.full((len(seeds), len(grid)), np.nan)
    for i, seed in enumerate(seeds):
        try:
            sample = source.draw(seed)
        except Exception:  # a replicate that cannot even be drawn counts as failed for every row
            continue
        for j, res in enumerate(evaluate_grid(sample, grid, truths)):
            if not isinstance(res, Exception):
                vals[i, j] = res.value
                if res.se is not None:
                    ses[i, j] = res.se
    return vals, ses


def _map_replicates(source, grid, n_reps: int, base_seed: int, parallelism: int):
    seeds = [base_seed + k for k in range(n_reps)]
    parallelism = max(1, int(parallelism))
    if parallelism == 1 or n_reps < 2:
        return _run_block((source, grid, seeds))
    n_blocks = min(n_reps, 4 * parallelism)
    bounds = np.linspace(0, n_reps, n_blocks + 1).astype(int)
    blocks = [(source, grid, seeds[a:b]) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=parallelism, mp_context=ctx) as pool:
        parts = list(pool.map(_run_block, blocks))
    return np.vstack([p[0] for p in parts]), np.vstack([p[1] for p in parts])


def run_mc_study(scenario, estimator_grid, n_reps: int, base_seed: int = 0, parallelism: int = 1,
                 title: str = "") -> McTable:
    """Monte Carlo study of ``estimator_grid`` over ``n_reps`` replicates.

    ``scenario`` is a :class:`KangSchaferConfig` (its seed is ignored; replicate
    k uses ``base_seed + k``) or any source with ``draw(seed)`` and
    ``truth(estimand)``. Estimator failures are counted per row in
    ``failed_reps`` and excluded from that row's metrics.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    source = KangSchaferSource(scenario.n, scenario.interaction) if isinstance(scenario, KangSchaferConfig) \
        else scenario
    grid = tuple(estimator_grid)
    vals, ses = _map_replicates(source, grid, n_reps, base_seed, parallelism)
    truths = [source.truth(s.estimand) for s in grid]
    return summarize(title, grid, vals, ses, truths, base_seed)


# estimator grids mirroring the published tables --------------------------------------

def _linear(names):
    return " + ".join(names)


def _interactions(terms, orders=(2, 3, 4)):
    return [":".join(c) for k in orders for c in itertools.combinations(terms, k)]


def covariate_models(design: str) -> dict:
    """Formulas for the correct (``"Z"``) or misspecified (``"X"``) covariate set.

    ``outcome`` and ``propensity`` are linear in the covariates; ``extra`` is
    the second working model of the multiply robust estimators: all main
    effects and 2- to 4-way interactions of Z, or of the square-root
    transformed X (x2 takes negative values and enters untransformed).
    """
    if design == "Z":
        base = list(Z_NAMES)
        extra = base + _interactions(base)
    elif design == "X":
        base = list(X_NAMES)
        roots = ["sqrt(x1)", "x2", "sqrt(x3)", "sqrt(x4)"]
        extra = roots + _interactions(roots)
    else:
        raise ValueError("design must be 'Z' or 'X'")
    return {
        "outcome": f"y ~ {_linear(base)}",
        "propensity": f"r ~ {_linear(base)}",
        "extra": f"y ~ {_linear(extra)}",
    }


RHO_LABELS = {"quadratic": "Q", "el": "EL", "et": "ET"}


def table1_grid(designs=("Z", "X"), rhos=("quadratic", "el", "et"), box: bool = False) -> list[EstimatorSpec]:
    """IPW, AIPW, OLS and CAL(rho, DR/MR) rows for the correct and misspecified designs.

    Calibration uses the term basis of the working models: the DR rows
    calibrate on the linear covariates, the MR rows additionally on the
    extra model's terms.
    """
    grid = []
    for d in designs:
        m = covariate_models(d)
        grid += [
            EstimatorSpec("IPW", "ipw", m["propensity"], group=d),
            EstimatorSpec("AIPW", "aipw", m["propensity"], (m["outcome"],), group=d),
            EstimatorSpec("OLS", "ols", None, (m["outcome"],), group=d),
        ]
        for tag, working in (("DR", (m["outcome"],)), ("MR", (m["outcome"], m["extra"]))):
            for rho in rhos:
                grid.append(EstimatorSpec(f"CAL,{RHO_LABELS.get(rho, rho)},{tag}", "cal", m["propensity"], working,
                                          basis=TERMS, rho=rho, box=box, group=d))
    return grid


def table3_grid(designs=("Z", "X"), rhos=("quadratic", "el", "et"), box: bool = False) -> list[EstimatorSpec]:
    """CAL rows with plug-in standard errors (multiply robust working set)."""
    grid = []
    for d in designs:
        m = covariate_models(d)
        for rho in rhos:
            grid.append(EstimatorSpec(f"CAL,{RHO_LABELS.get(rho, rho)}", "cal", m["propensity"],
                                      (m["outcome"], m["extra"]), basis=TERMS, rho=rho, box=box,
                                      with_se=True, group=d))
    return grid


def nested_models_grid(rhos=("quadratic", "el", "et"), box: bool = False) -> list[EstimatorSpec]:
    """Cases (a)-(d): nested working models in Z1..Z4 under correct or misspecified missingness."""
    working = tuple(f"y ~ {_linear(Z_NAMES[:k])}" for k in range(1, 5))
    grid = []
    for label, d in (("correct", "Z"), ("misspecified", "X")):
        prop = covariate_models(d)["propensity"]
        for rho in rhos:
            for k, case in enumerate("abcd", start=1):
                grid.append(EstimatorSpec(f"CAL,{RHO_LABELS.get(rho, rho)},({case})", "cal", prop, working[:k],
                                          basis=PREDICTIONS, rho=rho, box=box, group=label))
    return grid


def run_nested_models_study(n: int, n_reps: int, seed: int = 0, parallelism: int = 1,
                            rhos=("quadratic", "el", "et"), box: bool = False) -> McTable:
    """Multiple-robustness study with one to four nested working models."""
    return run_mc_study(KangSchaferConfig(n), nested_models_grid(rhos, box), n_reps, seed, parallelism,
                        title=f"nested working models, n={n}")


def multipurpose_grid(threshold: float = TAIL_THRESHOLD, box: bool = False) -> list[EstimatorSpec]:
    """Cases (a)-(d) for the mean and a tail probability with Z working models.

    (a) IPW; (b) CAL on the linear outcome model m1; (c) CAL on the logistic
    model m2 for P(y > threshold); (d) CAL on both, one common weight vector.
    """
    m1 = f"y ~ {_linear(Z_NAMES)}"
    m2 = f"I(y>{threshold:g}) ~ {_linear(Z_NAMES)}"
    grid = []
    for label, d in (("correct", "Z"), ("misspecified", "X")):
        prop = covariate_models(d)["propensity"]
        for est in (EstimandSpec(), EstimandSpec(TAIL, threshold=threshold)):
            grid += [
                EstimatorSpec("(a)", "ipw", prop, estimand=est, group=label),
                EstimatorSpec("(b)", "cal", prop, (m1,), box=box, estimand=est, group=label),
                EstimatorSpec("(c)", "cal", prop, (m2,), box=box, estimand=est, group=label),
                EstimatorSpec("(d)", "cal", prop, (m1, m2), box=box, estimand=est, group=label),
            ]
    return grid


def oracle_grid(box: bool = False) -> list[EstimatorSpec]:
    """CAL with the true outcome model alone and with two junk working models added."""
    prop = covariate_models("Z")["propensity"]
    true_m = f"y ~ {_linear(Z_NAMES)}"
    junk = ("y ~ sq(x1) + sq(x3)", "y ~ log(x4) + sq(z2)")
    return [
        EstimatorSpec("CAL,true", "cal", prop, (true_m,), box=box, group="Z"),
        EstimatorSpec("CAL,true+junk", "cal", prop, (true_m,) + junk, box=box, group="Z"),
    ]


# resampling study ------------------------------------------------------------------

def resampling_study(full: FullSample, missingness_truth: str, truth_coef, missingness_working: dict,
                     estimator_grid, S: int, seed: int = 0, parallelism: int = 1) -> McTable:
    """Repeatedly mask ``full`` and compare estimators against the full-sample truth.

    ``missingness_truth`` and ``truth_coef`` define the logistic model used
    to draw the response indicators. ``missingness_working`` maps a scenario
    label (e.g. "correct", "misspecified") to the propensity formula the
    estimators fit; every spec in ``estimator_grid`` is evaluated under every
    scenario. The table reports ``rb_percent`` and ``re_mse_vs_ipw`` (MSE
    relative to the IPW row of the same scenario and estimand).
    """
    source = ResampleSource(full, missingness_truth, tuple(float(c) for c in truth_coef))
    grid = []
    for label, prop in missingness_working.items():
        for s in estimator_grid:
            grid.append(replace(s, propensity=prop if s.kind != "ols" and s.kind != "oracle" else s.propensity,
                                group=label))
    return run_mc_study(source, grid, S, seed, parallelism, title="resampling study")


def synthetic_health_plan(n: int = 2000, seed: int = 0) -> FullSample:
    """Synthetic stand-in for a household expenditure survey.

    ``x1`` is a household size (1-8), ``x2`` a count of outpatient visits
    and ``y`` a right-skewed expenditure with many zeros that grows with
    both covariates.
    """
    u = open_uniforms(replicate_rng(seed), (n, 5))
    x1 = 1.0 + np.minimum(np.floor(-np.log(u[:, 0]) * 1.6), 7.0)
    lam = 1.0 + 0.8 * x1
    # geometric-ish visit counts by inversion
    x2 = np.floor(np.log(u[:, 1]) / np.log(lam / (1.0 + lam)))
    any_use = u[:, 2] < expit(-1.0 + 0.35 * x2 + 0.2 * x1)
    spend = np.exp(5.5 + 0.25 * np.log1p(x2) * 2.0 + 0.08 * x1 + 1.1 * ndtri(u[:, 3]))
    y = np.where(any_use, spend, 0.0)
    return FullSample(np.round(y, 2), np.column_stack([x1, x2]), ("x1", "x2"))


HEALTH_TRUTH_FORMULA = "r ~ x1 + x1:I(x1>=3) + x2"
HEALTH_TRUTH_COEF = (0.6, -0.25, 0.1, -0.12)
HEALTH_WORKING = {"correct": HEALTH_TRUTH_FORMULA, "misspecified": "r ~ x1 + x1:I(x1>=3)"}


def health_plan_grid(threshold: float, box: bool = False) -> list[EstimatorSpec]:
    """IPW and CAL(Q) with the mean model, the tail model and both."""
    m1 = "y ~ x1 + x2"
    m2 = f"I(y>{threshold:g}) ~ x1 + x2"
    grid = []
    for est in (EstimandSpec(), EstimandSpec(TAIL, threshold=threshold)):
        grid += [
            EstimatorSpec("(a)", "ipw", "r ~ 1", estimand=est),
            EstimatorSpec("(b)", "cal", "r ~ 1", (m1,), box=box, estimand=est),
            EstimatorSpec("(c)", "cal", "r ~ 1", (m2,), box=box, estimand=est),
            EstimatorSpec("(d)", "cal", "r ~ 1", (m1, m2), box=box, estimand=est),
        ]
    return grid
