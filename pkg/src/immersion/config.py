"""Run configuration: JSON file plus command-line overrides, schema-checked."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import jsonschema

from .errors import ConfigError

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "surface": {"type": "string"},
        "n": {"type": ["integer", "null"], "minimum": 4, "multipleOf": 2},
        "spectrum_n": {"type": ["integer", "null"], "minimum": 4, "maximum": 32, "multipleOf": 2},
        "mu2": {"type": ["number", "null"]},
        "tau_min": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "tau_max": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "fit_degree": {"type": "integer", "minimum": 1, "maximum": 5},
        "s_values": {"type": "array", "items": {"type": "number", "minimum": 1.5}},
        "out": {"type": "string"},
        "cache": {"type": "boolean"},
        "orientation": {"enum": [1, -1]},
        "bc": {"enum": ["periodic", "antiperiodic"]},
        "params": {"type": "object", "additionalProperties": {"type": "number"}},
        "route_tol": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["surface"],
}


@dataclass(frozen=True)
class RunConfig:
    surface: str = "flat"
    n: Optional[int] = None
    spectrum_n: Optional[int] = None
    mu2: Optional[float] = None
    tau_min: Optional[float] = None
    tau_max: Optional[float] = None
    fit_degree: int = 3
    s_values: tuple = (2.0, 3.0)
    out: str = "out"
    cache: bool = True
    orientation: int = 1
    bc: str = "periodic"
    params: dict = field(default_factory=dict)
    route_tol: float = 1e-6

    def as_dict(self) -> dict:
        d = asdict(self)
        d["s_values"] = list(self.s_values)
        return d


def validate_config(doc: dict) -> None:
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message}") from None


def make_config(doc: Optional[dict] = None, **overrides) -> RunConfig:
    """Merge a config document with overrides (``None`` overrides are ignored)."""
    merged = dict(doc or {})
    merged.update({k: v for k, v in overrides.items() if v is not None})
    merged.setdefault("surface", RunConfig.surface)
    validate_config(merged)
    known = {f.name for f in fields(RunConfig)}
    kw = {k: v for k, v in merged.items() if k in known}
    if "s_values" in kw:
        kw["s_values"] = tuple(float(s) for s in kw["s_values"])
    return RunConfig(**kw)


def load_config(path, **overrides) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config document must be an object")
    return make_config(doc, **overrides)
