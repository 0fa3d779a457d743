"""Run configuration: YAML file, JSON-schema validation and flag overrides."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import yaml

from .errors import ConfigError

WORKFLOWS = ("estimate", "simulate", "resample-study")
STUDIES = ("table1", "table2", "table3", "nested", "multipurpose", "oracle")
ESTIMATOR_KINDS = ("ipw", "hajek", "aipw", "ols", "cal", "cal2")

_ESTIMAND = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["mean", "tail"]},
        "threshold": {"type": ["number", "null"]},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "properties": {
        "workflow": {"enum": list(WORKFLOWS)},
        "input": {"type": ["string", "null"]},
        "missing_token": {"type": "string"},
        "rho": {"type": "string", "pattern": r"^(quadratic|q|el|et|cressie-read:[-+0-9.eE/]+)$"},
        "box": {"type": "boolean"},
        "propensity": {"type": ["string", "null"]},
        "working": {"type": "array", "items": {"type": "string"}},
        "basis": {"enum": ["predictions", "terms"]},
        "estimators": {"type": "array", "items": {"enum": list(ESTIMATOR_KINDS)}, "minItems": 1},
        "estimands": {"type": "array", "items": _ESTIMAND, "minItems": 1},
        "with_se": {"type": "boolean"},
        "se_weighted_projection": {"type": "boolean"},
        "robustness_mode": {"type": "boolean"},
        "seed": {"type": "integer", "minimum": 0},
        "reps": {"type": "integer", "minimum": 1},
        "parallelism": {"type": "integer", "minimum": 1},
        "output": {"type": ["string", "null"]},
        "simulate": {
            "type": "object",
            "properties": {
                "study": {"enum": list(STUDIES)},
                "n": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "resample": {
            "type": "object",
            "properties": {
                "truth_formula": {"type": "string"},
                "truth_coef": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "working_missingness": {"type": "object", "additionalProperties": {"type": "string"},
                                        "minProperties": 1},
                "synthetic_n": {"type": "integer", "minimum": 10},
            },
            "additionalProperties": False,
        },
    },
    "required": ["workflow"],
    "additionalProperties": False,
}


@dataclass(frozen=True)
class SimulateSection:
    study: str = "table1"
    n: int = 1000


@dataclass(frozen=True)
class ResampleSection:
    truth_formula: str = "r ~ x1 + x1:I(x1>=3) + x2"
    truth_coef: tuple[float, ...] = (0.6, -0.25, 0.1, -0.12)
    working_missingness: tuple[tuple[str, str], ...] = (
        ("correct", "r ~ x1 + x1:I(x1>=3) + x2"),
        ("misspecified", "r ~ x1 + x1:I(x1>=3)"),
    )
    synthetic_n: int = 2000


@dataclass(frozen=True)
class EstimandEntry:
    kind: str = "mean"
    threshold: float | None = None


@dataclass(frozen=True)
class RunConfig:
    """Everything a workflow needs; validated against :data:`SCHEMA`."""

    workflow: str = "estimate"
    input: str | None = None
    missing_token: str = "NA"
    rho: str = "quadratic"
    box: bool = True
    propensity: str | None = None
    working: tuple[str, ...] = ()
    basis: str = "predictions"
    estimators: tuple[str, ...] = ("ipw", "aipw", "ols", "cal")
    estimands: tuple[EstimandEntry, ...] = (EstimandEntry(),)
    with_se: bool = True
    se_weighted_projection: bool = True
    robustness_mode: bool = False
    seed: int = 0
    reps: int = 1000
    parallelism: int = 1
    output: str | None = None
    simulate: SimulateSection = field(default_factory=SimulateSection)
    resample: ResampleSection = field(default_factory=ResampleSection)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["working"] = list(self.working)
        d["estimators"] = list(self.estimators)
        d["estimands"] = [dict(e) for e in d["estimands"]]
        d["resample"]["truth_coef"] = list(self.resample.truth_coef)
        d["resample"]["working_missingness"] = dict(self.resample.working_missingness)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        validate(data)
        d = dict(data)
        if "working" in d:
            d["working"] = tuple(d["working"])
        if "estimators" in d:
            d["estimators"] = tuple(d["estimators"])
        if "estimands" in d:
            ests = []
            for e in d["estimands"]:
                if e["kind"] == "tail" and e.get("threshold") is None:
                    raise ConfigError("a tail estimand needs a threshold")
                thr = e.get("threshold")
                ests.append(EstimandEntry(e["kind"], None if thr is None else float(thr)))
            d["estimands"] = tuple(ests)
        if "simulate" in d:
            d["simulate"] = SimulateSection(**d["simulate"])
        if "resample" in d:
            rs = dict(d["resample"])
            if "truth_coef" in rs:
                rs["truth_coef"] = tuple(float(c) for c in rs["truth_coef"])
            if "working_missingness" in rs:
                rs["working_missingness"] = tuple(rs["working_missingness"].items())
            d["resample"] = ResampleSection(**rs)
        return cls(**d)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=False)

    @classmethod
    def from_yaml(cls, text: str) -> "RunConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping at the top level")
        return cls.from_dict(data)

    def with_overrides(self, **kw) -> "RunConfig":
        """Return a copy with the non-None keyword values replaced, then revalidate."""
        d = self.to_dict()
        for k, v in kw.items():
            if v is None:
                continue
            if k in ("study", "n"):
                d["simulate"][k] = v
            else:
                d[k] = v
        return RunConfig.from_dict(d)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form; identifies a configuration in reports."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def validate(data: dict) -> None:
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return RunConfig.from_yaml(text)
