"""Command-line front end.

Subcommands: ``estimate`` (one data set), ``simulate`` (Kang-Schafer Monte
Carlo tables), ``resample-study`` (repeated masking of a complete data set)
and ``formula-check``. Exit codes: 0 success, 1 usage or configuration
error, 2 numerical failure, 3 data error. Errors are printed to stderr as a
single JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, simulation
from .calibration import weight_diagnostics
from .config import STUDIES, RunConfig, load_config
from .data import load_csv, load_full_csv
from .errors import ConfigError, DataError, FormulaSyntaxError, GelcalError, ParseError
from .estimators import MEAN, TAIL, EstimandSpec
from .formula import bind, parse_formula
from .pipeline import EstimatorSpec, SampleContext, evaluate_grid
from .reporting import estimates_csv, estimates_text, provenance_lines, write_table


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"usage: {message}")


def _common(p):
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--rho", help="quadratic | el | et | cressie-read:<theta>")
    p.add_argument("--no-box", action="store_true", help="disable the feasibility box")
    p.add_argument("--parallelism", type=int)
    p.add_argument("--out", help="output path (file for estimate, base name for tables)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gelcal", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gelcal {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("estimate", help="estimate a mean or tail probability from a CSV file")
    _common(p)
    p.add_argument("--input", help="CSV with columns y, optional r, and covariates")
    p.add_argument("--propensity", help='missingness model, e.g. "r ~ x1 + x2"')
    p.add_argument("--working", action="append", help="working outcome model (repeatable)")
    p.add_argument("--basis", choices=("predictions", "terms"))

    p = sub.add_parser("simulate", help="run a Kang-Schafer Monte Carlo study")
    _common(p)
    p.add_argument("--study", choices=STUDIES)
    p.add_argument("--n", type=int, help="sample size per replicate")

    p = sub.add_parser("resample-study", help="repeatedly mask a complete data set")
    _common(p)
    p.add_argument("--input", help="complete-data CSV (omit to use the synthetic stand-in)")

    p = sub.add_parser("formula-check", help="parse a model formula and print its structure")
    p.add_argument("formula")
    p.add_argument("--columns", help="comma-separated column names to bind against")
    return parser


def _config(args, workflow: str) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig(workflow=workflow)
    if cfg.workflow != workflow:
        cfg = cfg.with_overrides(workflow=workflow)
    over = dict(seed=args.seed, reps=args.reps, rho=args.rho, parallelism=args.parallelism, output=args.out)
    if args.no_box:
        over["box"] = False
    for name in ("input", "propensity", "basis", "study", "n"):
        if hasattr(args, name):
            over[name] = getattr(args, name)
    if getattr(args, "working", None):
        over["working"] = list(args.working)
    return cfg.with_overrides(**over)


def _estimands(cfg: RunConfig):
    return [EstimandSpec(MEAN) if e.kind == "mean" else EstimandSpec(TAIL, threshold=e.threshold)
            for e in cfg.estimands]


def _header(cfg: RunConfig, **extra) -> list[str]:
    return provenance_lines(cfg.seed, cfg.digest(), extra)


def cmd_estimate(cfg: RunConfig, stdout=None) -> list[dict]:
    stdout = stdout or sys.stdout
    if not cfg.input:
        raise ConfigError("estimate needs an input CSV (--input or 'input' in the config)")
    sample = load_csv(cfg.input, cfg.missing_token)
    working = tuple(cfg.working)
    needs_pi = any(k != "ols" for k in cfg.estimators)
    prop = cfg.propensity
    if needs_pi and prop is None:
        prop = "r ~ " + " + ".join(sample.column_names)
    for f in ((prop,) if prop else ()) + working:
        bind(parse_formula(f), sample.column_names)
    if not working and any(k in ("aipw", "ols", "cal", "cal2") for k in cfg.estimators):
        raise ConfigError("aipw, ols and cal estimators need at least one working model")
    grid = []
    for est in _estimands(cfg):
        for kind in cfg.estimators:
            grid.append(EstimatorSpec(
                name=kind.upper(), kind=kind, propensity=None if kind == "ols" else prop, working=working,
                basis=cfg.basis, rho=cfg.rho, box=cfg.box, estimand=est,
                with_se=cfg.with_se and not cfg.robustness_mode, se_weighted_projection=cfg.se_weighted_projection,
            ))
    ctx = SampleContext(sample)
    results = evaluate_grid(sample, grid, quiet=False, strict=True, context=ctx)
    rows = []
    for spec, res in zip(grid, results):
        row = dict(estimator=res.method, estimand=spec.estimand.label, value=res.value, se=res.se,
                   ci_lo=res.ci_lo, ci_hi=res.ci_hi, n_complete=res.n_complete)
        if spec.kind in ("cal", "cal2"):
            row.update({k: v for k, v in weight_diagnostics(ctx.calibration(spec), sample.r).items()
                        if k in ("min_weight", "max_weight", "n_negative", "effective_sample_size",
                                 "max_abs_moment_residual")})
        rows.append(row)
    stdout.write(estimates_text(rows))
    if cfg.output:
        Path(cfg.output).parent.mkdir(parents=True, exist_ok=True)
        Path(cfg.output).write_text(estimates_csv(rows, _header(cfg, input=cfg.input)), encoding="utf-8")
    return rows


def study_grid(study: str, box: bool):
    if study in ("table1", "table2"):
        return simulation.table1_grid(box=box)
    if study == "table3":
        return simulation.table3_grid(box=box)
    if study == "nested":
        return simulation.nested_models_grid(box=box)
    if study == "multipurpose":
        return simulation.multipurpose_grid(box=box)
    if study == "oracle":
        return simulation.oracle_grid(box=box)
    raise ConfigError(f"unknown study {study!r}")


def cmd_simulate(cfg: RunConfig):
    study, n = cfg.simulate.study, cfg.simulate.n
    scenario = simulation.KangSchaferConfig(n, interaction=study == "table2")
    table = simulation.run_mc_study(scenario, study_grid(study, cfg.box), cfg.reps, cfg.seed, cfg.parallelism,
                                    title=f"{study}, n={n}, reps={cfg.reps}")
    out = cfg.output or f"{study}_n{n}"
    return table, write_table(table, out, _header(cfg, study=study, n=n, reps=cfg.reps))


def cmd_resample(cfg: RunConfig):
    rs = cfg.resample
    if cfg.input:
        full = load_full_csv(cfg.input)
    else:
        full = simulation.synthetic_health_plan(rs.synthetic_n, cfg.seed)
    thr = float(np.quantile(full.y, 0.9))
    for e in cfg.estimands:
        if e.kind == "tail":
            thr = e.threshold
    cols = full.column_names
    bind(parse_formula(rs.truth_formula), cols)
    for f in dict(rs.working_missingness).values():
        bind(parse_formula(f), cols)
    lin = " + ".join(cols)
    working = tuple(cfg.working) or (f"y ~ {lin}", f"I(y>{thr:g}) ~ {lin}")
    grid = []
    for est in (EstimandSpec(MEAN), EstimandSpec(TAIL, threshold=thr)):
        grid.append(EstimatorSpec("(a)", "ipw", "r ~ 1", estimand=est))
        for j, w in enumerate(working):
            grid.append(EstimatorSpec(f"({'bcdefg'[j]})", "cal", "r ~ 1", (w,), basis=cfg.basis, rho=cfg.rho,
                                      box=cfg.box, estimand=est))
        if len(working) > 1:
            grid.append(EstimatorSpec("(all)", "cal", "r ~ 1", working, basis=cfg.basis, rho=cfg.rho,
                                      box=cfg.box, estimand=est))
    table = simulation.resampling_study(full, rs.truth_formula, rs.truth_coef, dict(rs.working_missingness), grid,
                                        cfg.reps, cfg.seed, cfg.parallelism)
    out = cfg.output or "resample_study"
    return table, write_table(table, out, _header(cfg, reps=cfg.reps, input=cfg.input or "synthetic"))


def cmd_formula_check(text: str, columns: str | None, stdout=None) -> dict:
    stdout = stdout or sys.stdout
    spec = parse_formula(text)
    if columns:
        bind(spec, [c.strip() for c in columns.split(",") if c.strip()])
    info = {
        "formula": str(spec),
        "response": str(spec.response),
        "indicator_response": spec.is_indicator,
        "terms": [str(t) for t in spec.terms],
        "columns": list(spec.columns),
    }
    stdout.write(json.dumps(info) + "\n")
    return info


def error_payload(exc: BaseException) -> dict:
    code = getattr(exc, "exit_code", 2)
    body = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, FormulaSyntaxError):
        body.update(offset=exc.offset, expected=sorted(exc.expected))
    if isinstance(exc, ParseError):
        body.update(row=exc.row, column=exc.column)
    return body


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "formula-check":
            cmd_formula_check(args.formula, args.columns)
            return 0
        workflow = {"estimate": "estimate", "simulate": "simulate", "resample-study": "resample-study"}[args.command]
        cfg = _config(args, workflow)
        if workflow == "estimate":
            cmd_estimate(cfg)
        elif workflow == "simulate":
            _, paths = cmd_simulate(cfg)
            sys.stdout.write("".join(f"wrote {p}\n" for p in paths))
        else:
            _, paths = cmd_resample(cfg)
            sys.stdout.write("".join(f"wrote {p}\n" for p in paths))
        return 0
    except GelcalError as exc:
        sys.stderr.write(json.dumps(error_payload(exc)) + "\n")
        return exc.exit_code
    except FileNotFoundError as exc:
        err = DataError(f"file not found: {exc.filename}")
        sys.stderr.write(json.dumps(error_payload(err)) + "\n")
        return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
