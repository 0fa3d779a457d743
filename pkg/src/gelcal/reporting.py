"""CSV and Markdown tables with a reproducibility header."""

from __future__ import annotations

import csv
import io
from pathlib import Path

from . import __version__
from .simulation import METRIC_COLUMNS, McTable


def provenance_lines(seed: int, config_hash: str, extra: dict | None = None) -> list[str]:
    lines = [f"gelcal_version: {__version__}", f"seed: {seed}", f"config_sha256: {config_hash}"]
    for k, v in (extra or {}).items():
        lines.append(f"{k}: {v}")
    return lines


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def metrics_rows(table: McTable) -> list[list[str]]:
    return [[_fmt(getattr(m, c)) for c in METRIC_COLUMNS] for m in table.metrics]


def table_csv(table: McTable, header: list[str]) -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    w.writerows(metrics_rows(table))
    return buf.getvalue()


def _short(v, digits=3) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.{digits}f}"
    return str(v)


def table_markdown(table: McTable, header: list[str]) -> str:
    cols = ["group", "name", "estimand", "bias", "sse", "rmse", "re_rmse_vs_ols", "re_mse_vs_ipw", "see",
            "coverage", "failed_reps"]
    out = [f"<!-- {line} -->" for line in header]
    if table.title:
        out.append(f"### {table.title}")
        out.append("")
    out.append("| " + " | ".join(cols) + " |")
    out.append("|" + "---|" * len(cols))
    for m in table.metrics:
        out.append("| " + " | ".join(_short(getattr(m, c)) for c in cols) + " |")
    return "\n".join(out) + "\n"


def write_table(table: McTable, out_base, header: list[str]) -> list[Path]:
    """Write ``<out_base>.csv`` and ``<out_base>.md``; returns the paths."""
    base = Path(out_base)
    base.parent.mkdir(parents=True, exist_ok=True)
    paths = [base.with_suffix(".csv"), base.with_suffix(".md")]
    paths[0].write_text(table_csv(table, header), encoding="utf-8")
    paths[1].write_text(table_markdown(table, header), encoding="utf-8")
    return paths


ESTIMATE_COLUMNS = ("estimator", "estimand", "value", "se", "ci_lo", "ci_hi", "n_complete", "min_weight",
                    "max_weight", "n_negative", "effective_sample_size", "max_abs_moment_residual")


def estimates_csv(rows: list[dict], header: list[str]) -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ESTIMATE_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in ESTIMATE_COLUMNS])
    return buf.getvalue()


def estimates_text(rows: list[dict]) -> str:
    cols = ("estimator", "estimand", "value", "se", "ci_lo", "ci_hi", "n_complete")
    cells = [[c for c in cols]] + [[_short(r.get(c), 4) for c in cols] for r in rows]
    widths = [max(len(row[j]) for row in cells) for j in range(len(cols))]
    return "\n".join("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() for row in cells) + "\n"
