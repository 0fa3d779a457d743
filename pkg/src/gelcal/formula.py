"""Model formula mini-language.

Grammar::

    formula   := response "~" ("1" | term ("+" term)*)
    response  := name | indicator
    term      := factor (":" factor)*
    factor    := name | fn "(" name ")" | indicator
    indicator := "I(" name cmp number ")"
    fn        := "sq" | "sqrt" | "log"
    cmp       := ">" | ">=" | "<" | "<="

An intercept is always included in the design; ``y ~ 1`` is the
intercept-only model. ``a:b`` multiplies the factors elementwise; chains
such as ``z1:z2:z3`` are allowed.
"""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass

import numpy as np

from .errors import FormulaSyntaxError, InvariantViolation, UnknownColumn

TRANSFORMS = ("sq", "sqrt", "log")
_CMP = {">": operator.gt, ">=": operator.ge, "<": operator.lt, "<=": operator.le}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<cmp>>=|<=|>|<)
  | (?P<sym>[~+:()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Factor:
    column: str
    transform: str = "identity"  # identity | sq | sqrt | log | indicator
    op: str | None = None
    threshold: float | None = None

    def __str__(self):
        if self.transform == "identity":
            return self.column
        if self.transform == "indicator":
            return f"I({self.column}{self.op}{self.threshold!r})"
        return f"{self.transform}({self.column})"

    def evaluate(self, values: np.ndarray) -> np.ndarray:
        t = self.transform
        if t == "identity":
            return values
        if t == "sq":
            return values * values
        if t == "indicator":
            out = _CMP[self.op](values, self.threshold).astype(float)
            return np.where(np.isnan(values), np.nan, out)
        finite = values[~np.isnan(values)]
        if t == "sqrt":
            if np.any(finite < 0):
                raise InvariantViolation(f"sqrt({self.column}) needs non-negative values")
            return np.sqrt(values)
        if np.any(finite <= 0):
            raise InvariantViolation(f"log({self.column}) needs positive values")
        return np.log(values)


@dataclass(frozen=True)
class Term:
    factors: tuple[Factor, ...]

    def __str__(self):
        return ":".join(str(f) for f in self.factors)

    @property
    def columns(self):
        return tuple(f.column for f in self.factors)


@dataclass(frozen=True)
class FormulaSpec:
    response: Factor
    terms: tuple[Term, ...]

    def __str__(self):
        rhs = " + ".join(str(t) for t in self.terms) if self.terms else "1"
        return f"{self.response} ~ {rhs}"

    @property
    def is_indicator(self) -> bool:
        return self.response.transform == "indicator"

    @property
    def columns(self) -> tuple[str, ...]:
        seen = []
        for t in self.terms:
            for c in t.columns:
                if c not in seen:
                    seen.append(c)
        return tuple(seen)

    def design(self, sample) -> tuple[np.ndarray, list[str]]:
        """Design matrix (intercept first) and column labels for ``sample``."""
        cols = [np.ones(sample.n)]
        names = ["(intercept)"]
        for term in self.terms:
            v = np.ones(sample.n)
            for f in term.factors:
                if not sample.has_column(f.column):
                    raise UnknownColumn(f"formula references unknown column {f.column!r}")
                v = v * f.evaluate(np.asarray(sample.column(f.column), dtype=float))
            cols.append(v)
            names.append(str(term))
        return np.column_stack(cols), names

    def response_values(self, sample) -> np.ndarray:
        if not sample.has_column(self.response.column):
            raise UnknownColumn(f"formula references unknown column {self.response.column!r}")
        return self.response.evaluate(np.asarray(sample.column(self.response.column), dtype=float))


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = self._tokenize(text)
        self.pos = 0

    def _offset(self, idx):
        return len(self.text[:idx].encode("utf-8"))

    def _tokenize(self, text):
        toks = []
        i = 0
        while i < len(text):
            m = _TOKEN_RE.match(text, i)
            if not m:
                raise FormulaSyntaxError(f"unexpected character {text[i]!r}", self._offset(i),
                                         ("name", "number", "operator"))
            kind = m.lastgroup
            if kind != "ws":
                toks.append((kind, m.group(), i))
            i = m.end()
        toks.append(("end", "", len(text)))
        return toks

    def peek(self, k=0):
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def fail(self, expected):
        kind, val, i = self.peek()
        what = "end of input" if kind == "end" else repr(val)
        raise FormulaSyntaxError(f"unexpected {what}", self._offset(i), expected)

    def expect(self, kind, value=None, expected=None):
        k, v, _ = self.peek()
        if k != kind or (value is not None and v != value):
            self.fail(expected or ({value} if value else {kind}))
        self.pos += 1
        return v

    def factor(self):
        kind, val, _ = self.peek()
        if kind != "name":
            self.fail({"name", "sq(", "sqrt(", "log(", "I("})
        nxt = self.peek(1)
        if nxt[0] == "sym" and nxt[1] == "(":
            if val == "I":
                return self.indicator()
            if val not in TRANSFORMS:
                self.fail({"name"} | {f"{t}(" for t in TRANSFORMS} | {"I("})
            self.pos += 2
            col = self.expect("name", expected={"name"})
            self.expect("sym", ")", expected={")"})
            return Factor(col, val)
        self.pos += 1
        return Factor(val)

    def indicator(self):
        self.pos += 2  # I (
        col = self.expect("name", expected={"name"})
        op = self.expect("cmp", expected={">", ">=", "<", "<="})
        num = self.expect("number", expected={"number"})
        self.expect("sym", ")", expected={")"})
        return Factor(col, "indicator", op, float(num))

    def term(self):
        factors = [self.factor()]
        while self.peek()[0] == "sym" and self.peek()[1] == ":":
            self.pos += 1
            factors.append(self.factor())
        return Term(tuple(factors))

    def parse(self) -> FormulaSpec:
        kind, val, _ = self.peek()
        if kind == "name" and val == "I" and self.peek(1)[1] == "(":
            response = self.indicator()
        elif kind == "name" and self.peek(1)[1] != "(":
            self.pos += 1
            response = Factor(val)
        else:
            self.fail({"name", "I("})
        self.expect("sym", "~", expected={"~"})
        kind, val, _ = self.peek()
        if kind == "number" and val == "1":
            self.pos += 1
            if self.peek()[0] != "end":
                self.fail({"end"})
            return FormulaSpec(response, ())
        terms = [self.term()]
        while True:
            kind, val, _ = self.peek()
            if kind == "end":
                break
            if kind == "sym" and val == "+":
                self.pos += 1
                terms.append(self.term())
                continue
            self.fail({"+", ":", "end"})
        return FormulaSpec(response, tuple(terms))


def parse_formula(text: str) -> FormulaSpec:
    """Parse ``text`` into a :class:`FormulaSpec` or raise FormulaSyntaxError."""
    return _Parser(text).parse()


def bind(spec: FormulaSpec, columns) -> FormulaSpec:
    """Check that every referenced column exists in ``columns``."""
    have = set(columns) | {"y", "r"}
    for c in (spec.response.column, *spec.columns):
        if c not in have:
            raise UnknownColumn(f"formula references unknown column {c!r}")
    return spec
