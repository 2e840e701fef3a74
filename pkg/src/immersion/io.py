"""CSV field dumps, chart documents and the report schema."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import jsonschema
import numpy as np

from .dirac import SpinorField
from .errors import ConfigError, InvalidChartError
from .geometry import SurfaceChart, sampled_chart
from .spectral import ParamDomain

REPORT_SCHEMA_VERSION = "1.0"

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "surface", "kind", "units", "config", "status",
                 "failed_at", "checks"],
    "properties": {
        "schema_version": {"const": REPORT_SCHEMA_VERSION},
        "surface": {"type": "string"},
        "kind": {"enum": ["immersion", "abstract-data", "sampled"]},
        "units": {"type": "string"},
        "config": {"type": "object"},
        "status": {"enum": ["pass", "fail", "error"]},
        "failed_at": {"type": ["string", "null"]},
        "error": {"type": ["string", "null"]},
        "geometry": {"type": "object"},
        "dirac": {"type": "object"},
        "spectrum": {"type": "object"},
        "anomaly": {"type": "object"},
        "fields": {
            "type": "object",
            "properties": {
                "columns": {"type": "array", "items": {"type": "string"}},
                "rows": {"type": "array", "items": {"type": "array",
                                                   "items": {"type": ["number", "null"]}}},
            },
        },
        "checks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "value", "threshold", "passed"],
                "properties": {
                    "name": {"type": "string"},
                    "value": {"type": ["number", "null"]},
                    "threshold": {"type": ["number", "null"]},
                    "passed": {"type": "boolean"},
                    "informational": {"type": "boolean"},
                },
            },
        },
    },
}


def validate_report(doc: dict) -> None:
    jsonschema.validate(doc, REPORT_SCHEMA)


def write_field_csv(path, q1, q2, value) -> Path:
    """Columns q1,q2,value; complex fields get value_re,value_im."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    value = np.asarray(value)
    cplx = np.iscomplexobj(value)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["q1", "q2", "value_re", "value_im"] if cplx else ["q1", "q2", "value"])
        for a, b, v in zip(np.ravel(q1), np.ravel(q2), value.ravel()):
            w.writerow([repr(float(a)), repr(float(b))]
                       + ([repr(float(v.real)), repr(float(v.imag))] if cplx else [repr(float(v))]))
    return path


def read_field_csv(path, shape=None):
    """Return ``(q1, q2, value)`` flattened, or reshaped to ``shape``."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], np.array(rows[1:], dtype=float)
    if head[:2] != ["q1", "q2"]:
        raise InvalidChartError(f"{path}: expected q1,q2 leading columns")
    value = body[:, 2] + 1j * body[:, 3] if "value_im" in head else body[:, 2]
    out = (body[:, 0], body[:, 1], value)
    if shape is not None:
        out = tuple(np.reshape(a, shape) for a in out)
    return out


def write_spinor_csv(path, q1, q2, psi: SpinorField) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["q1", "q2", "psi1_re", "psi1_im", "psi2_re", "psi2_im"])
        for a, b, u, v in zip(np.ravel(q1), np.ravel(q2), np.ravel(psi.psi1), np.ravel(psi.psi2)):
            w.writerow([repr(float(x)) for x in (a, b, u.real, u.imag, v.real, v.imag)])
    return path


def read_spinor_csv(path, shape) -> SpinorField:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    body = np.array(rows[1:], dtype=float)
    return SpinorField((body[:, 2] + 1j * body[:, 3]).reshape(shape),
                       (body[:, 4] + 1j * body[:, 5]).reshape(shape))


def write_columns_csv(path, columns: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    data = [np.ravel(columns[k]) for k in names]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*data):
            w.writerow([repr(float(x)) for x in row])
    return path


CHART_SCHEMA = {
    "type": "object",
    "required": ["name", "kind", "n1", "n2"],
    "properties": {
        "name": {"type": "string"},
        "kind": {"enum": ["catalog", "sampled"]},
        "params": {"type": "object"},
        "n1": {"type": "integer", "minimum": 4},
        "n2": {"type": "integer", "minimum": 4},
        "orientation": {"enum": [1, -1]},
        "files": {"type": "object",
                  "properties": {k: {"type": "string"} for k in ("x1", "x2", "x3")}},
    },
}


def load_chart_document(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
        jsonschema.validate(doc, CHART_SCHEMA)
    except (OSError, json.JSONDecodeError, jsonschema.ValidationError) as exc:
        raise ConfigError(f"bad chart document {path}: {exc}") from None
    doc["_base"] = str(path.parent)
    return doc


def sampled_chart_from_document(doc: dict) -> SurfaceChart:
    """Build a periodic chart from three CSV grids of x^1, x^2, x^3."""
    if doc["kind"] != "sampled":
        raise ConfigError("document does not describe a sampled chart")
    params = doc.get("params", {})
    domain = ParamDomain(doc["n1"], doc["n2"], params.get("L1", 2 * np.pi),
                         params.get("L2", 2 * np.pi))
    base = Path(doc.get("_base", "."))
    comps = []
    for k in ("x1", "x2", "x3"):
        try:
            _, _, v = read_field_csv(base / doc["files"][k], domain.shape)
        except KeyError:
            raise ConfigError(f"chart document lacks file for {k}") from None
        comps.append(np.real(v))
    return sampled_chart(doc["name"], domain, np.stack(comps), doc.get("orientation", 1))
