"""Observed-sample representation and CSV ingestion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvariantViolation, ParseError, UnknownColumn

DEFAULT_MISSING = "NA"


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ObservedSample:
    """Data ``(r_i, r_i y_i, x_i)`` for N units.

    ``y`` holds NaN where the response is missing. Arrays are read-only.
    """

    y: np.ndarray
    r: np.ndarray
    x: np.ndarray
    column_names: tuple[str, ...]

    def __post_init__(self):
        y = _frozen(self.y)
        r = _frozen(self.r, dtype=np.int64)
        x = _frozen(self.x)
        if x.ndim == 1:
            x = _frozen(x.reshape(-1, 1))
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "column_names", tuple(self.column_names))
        n = y.shape[0]
        if r.shape != (n,) or x.shape[0] != n:
            raise InvariantViolation(f"length mismatch: y {y.shape}, r {r.shape}, x {x.shape}")
        if x.shape[1] != len(self.column_names):
            raise InvariantViolation("column_names do not match the covariate matrix")
        if len(set(self.column_names)) != len(self.column_names):
            raise InvariantViolation("duplicate covariate names")
        if not np.all((r == 0) | (r == 1)):
            raise InvariantViolation("r must be 0/1")
        present = ~np.isnan(y)
        if np.any(present != (r == 1)):
            i = int(np.flatnonzero(present != (r == 1))[0])
            raise InvariantViolation(f"y present iff r=1 violated at unit {i}")
        if not np.all(np.isfinite(y[present])):
            raise InvariantViolation("observed y must be finite")
        if not np.all(np.isfinite(x)):
            raise InvariantViolation("covariates must be finite")
        if n and not np.any(r == 1):
            raise InvariantViolation("no complete cases")

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def n_complete(self) -> int:
        return int(self.r.sum())

    @property
    def complete(self) -> np.ndarray:
        return self.r == 1

    def column(self, name: str) -> np.ndarray:
        if name == "y":
            return self.y
        if name == "r":
            return self.r.astype(float)
        try:
            return self.x[:, self.column_names.index(name)]
        except ValueError:
            raise UnknownColumn(f"unknown column {name!r}; have {list(self.column_names)}") from None

    def has_column(self, name: str) -> bool:
        return name in ("y", "r") or name in self.column_names

    def __eq__(self, other):
        if not isinstance(other, ObservedSample):
            return NotImplemented
        return (
            self.column_names == other.column_names
            and np.array_equal(self.y, other.y, equal_nan=True)
            and np.array_equal(self.r, other.r)
            and np.array_equal(self.x, other.x)
        )

    @classmethod
    def from_full(cls, full: "FullSample", r) -> "ObservedSample":
        r = np.asarray(r, dtype=np.int64)
        y = np.where(r == 1, full.y, np.nan)
        return cls(y=y, r=r, x=full.x, column_names=full.column_names)


@dataclass(frozen=True, eq=False)
class FullSample:
    """Fully observed data, used as ground truth by the simulation harness."""

    y: np.ndarray
    x: np.ndarray
    column_names: tuple[str, ...]

    def __post_init__(self):
        y = _frozen(self.y)
        x = _frozen(self.x)
        if x.ndim == 1:
            x = _frozen(x.reshape(-1, 1))
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "column_names", tuple(self.column_names))
        if x.shape[0] != y.shape[0] or x.shape[1] != len(self.column_names):
            raise InvariantViolation("full sample dimensions do not conform")

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    def observed(self) -> ObservedSample:
        return ObservedSample.from_full(self, np.ones(self.n, dtype=np.int64))


def _parse_float(text, row, col):
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"not a number: {text!r}", row=row, column=col) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value {text!r}", row=row, column=col)
    return v


def load_csv(path, missing_token: str = DEFAULT_MISSING) -> ObservedSample:
    """Read a comma-delimited file with a header row and a ``y`` column.

    Remaining columns are numeric covariates, except an optional ``r``
    column of 0/1 indicators. Without ``r``, a unit counts as complete when
    its ``y`` cell is non-empty and not ``missing_token``. Lines starting with
    ``#`` before the header are skipped. Row numbers in errors are 1-based
    file lines.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        lines = [(i + 1, line) for i, line in enumerate(fh)]
    lines = [(i, s) for i, s in lines if s.strip() and not s.startswith("#")]
    if not lines:
        raise ParseError("empty file: header row required")
    reader = csv.reader([s for _, s in lines])
    rows = list(reader)
    header = [h.strip() for h in rows[0]]
    if "y" not in header:
        raise ParseError("missing required column 'y'", row=lines[0][0])
    if len(set(header)) != len(header):
        raise ParseError("duplicate column names in header", row=lines[0][0])
    iy = header.index("y")
    ir = header.index("r") if "r" in header else None
    cov_idx = [j for j, h in enumerate(header) if j not in (iy, ir)]
    ys, rs, xs = [], [], []
    for (lineno, _), cells in zip(lines[1:], rows[1:]):
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(cells)}", row=lineno)
        cells = [c.strip() for c in cells]
        ycell = cells[iy]
        y_missing = ycell == "" or ycell == missing_token
        y = math.nan if y_missing else _parse_float(ycell, lineno, "y")
        if ir is None:
            r = 0 if y_missing else 1
        else:
            rc = cells[ir]
            if rc not in ("0", "1"):
                raise ParseError(f"r must be 0 or 1, got {rc!r}", row=lineno, column="r")
            r = int(rc)
            if r == 1 and y_missing:
                raise InvariantViolation(f"y missing where r=1 (row {lineno})")
            if r == 0 and not y_missing:
                raise InvariantViolation(f"y present where r=0 (row {lineno})")
        xrow = []
        for j in cov_idx:
            if cells[j] == "" or cells[j] == missing_token:
                raise ParseError("covariates must be fully observed", row=lineno, column=header[j])
            xrow.append(_parse_float(cells[j], lineno, header[j]))
        ys.append(y)
        rs.append(r)
        xs.append(xrow)
    names = tuple(header[j] for j in cov_idx)
    x = np.array(xs, dtype=float).reshape(len(ys), len(names))
    return ObservedSample(y=np.array(ys), r=np.array(rs, dtype=np.int64), x=x, column_names=names)


def write_csv(sample: ObservedSample, path, missing_token: str = DEFAULT_MISSING, header_comments=()) -> None:
    """Write ``sample`` with columns y, r, covariates; floats use repr so they re-parse exactly."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        for line in header_comments:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y", "r", *sample.column_names])
        for i in range(sample.n):
            y = missing_token if sample.r[i] == 0 else repr(float(sample.y[i]))
            w.writerow([y, int(sample.r[i]), *(repr(float(v)) for v in sample.x[i])])


def write_full_csv(full: FullSample, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y", *full.column_names])
        for i in range(full.n):
            w.writerow([repr(float(full.y[i])), *(repr(float(v)) for v in full.x[i])])


def load_full_csv(path) -> FullSample:
    s = load_csv(path)
    if s.n_complete != s.n:
        raise InvariantViolation("full-data file must have no missing y")
    return FullSample(y=s.y, x=s.x, column_names=s.column_names)
