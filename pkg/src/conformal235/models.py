"""Model files: a rank-2 distribution given by two vector fields in named coordinates.

{
  "name": "monge_q3",
  "coordinates": ["x", "u", "p", "q", "z"],
  "X1": ["0", "0", "0", "1", "0"],
  "X2": ["1", "p", "q", "0", "q^3"],
  "points": [[0, 0, 0, 1, 0]],
  "expect": {"valid": true, "flat": false}
}

Coordinates are mapped onto x1..x5 in order after parsing.
"""
from __future__ import annotations
import json
from dataclasses import dataclass, field
from pathlib import Path

from jsonschema import Draft202012Validator

from .errors import ExpressionSyntaxError, ModelFileError
from .exprcore import BASE_VARIABLES, FUNCTIONS, VectorField, parse_expression, substitute, var
from .frame import Distribution
from .utils import CORPUS_DIR, get_logger

log = get_logger(__name__)

_FIELD = {"type": "array", "items": {"type": "string", "minLength": 1}, "minItems": 5, "maxItems": 5}

MODEL_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["name", "coordinates", "X1", "X2"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "coordinates": {
            "type": "array", "minItems": 5, "maxItems": 5, "uniqueItems": True,
            "items": {"type": "string", "pattern": "^[a-z][a-z0-9]*$", "not": {"enum": list(FUNCTIONS)}},
        },
        "X1": _FIELD,
        "X2": _FIELD,
        "points": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "number"}, "minItems": 5, "maxItems": 5},
        },
        "expect": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "valid": {"type": "boolean"},
                "flat": {"type": "boolean"},
                "growth": {"type": "array", "items": {"type": "integer", "minimum": 0, "maximum": 5},
                           "minItems": 3, "maxItems": 3},
            },
        },
    },
}

_VALIDATOR = Draft202012Validator(MODEL_SCHEMA)

DEFAULT_POINT = (0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True, eq=False)
class Model:
    name: str
    coordinates: tuple[str, ...]
    distribution: Distribution
    points: tuple[tuple[float, ...], ...]
    expect: dict = field(default_factory=dict)
    description: str = ""
    source: str = "<memory>"

    @property
    def expects_valid(self) -> bool:
        return bool(self.expect.get("valid", True))

    @property
    def expected_growth(self) -> tuple[int, int, int] | None:
        g = self.expect.get("growth")
        if g is not None:
            return tuple(g)
        return (2, 3, 5) if self.expects_valid else None


def _parse_field(exprs: list[str], coordinates, label: str, source: str) -> VectorField:
    rename = {c: var(x) for c, x in zip(coordinates, BASE_VARIABLES)}
    comps = []
    for i, text in enumerate(exprs):
        try:
            e = parse_expression(text, coordinates)
        except ExpressionSyntaxError as err:
            raise ModelFileError(f"{source}: {label}[{i}] {text!r}: {err}") from err
        comps.append(substitute(e, rename))
    return VectorField(BASE_VARIABLES, tuple(comps))


def parse_model(data: dict, source: str = "<memory>") -> Model:
    errors = sorted(_VALIDATOR.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        where = "/".join(str(p) for p in first.absolute_path) or "<root>"
        raise ModelFileError(f"{source}: {where}: {first.message}")
    coords = tuple(data["coordinates"])
    X1 = _parse_field(data["X1"], coords, "X1", source)
    X2 = _parse_field(data["X2"], coords, "X2", source)
    points = tuple(tuple(float(x) for x in p) for p in data.get("points", [DEFAULT_POINT]))
    return Model(data["name"], coords, Distribution(X1, X2, data["name"]), points,
                 dict(data.get("expect", {})), data.get("description", ""), source)


def load_model(path: str | Path) -> Model:
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ModelFileError(f"{p}: not valid JSON ({err.msg} at line {err.lineno})") from err
    return parse_model(data, str(p))


def load_corpus(directory: str | Path = CORPUS_DIR) -> list[Model]:
    """Every *.json model in the directory, sorted by file name."""
    d = Path(directory)
    if not d.is_dir():
        raise ModelFileError(f"{d}: not a directory")
    models = [load_model(p) for p in sorted(d.glob("*.json"))]
    log.info("loaded %d models from %s", len(models), d)
    return models


# ---------------------------
# Built-in references
# ---------------------------

def flat_model() -> Model:
    """Nilpotent model: X1 = ∂1, X2 = ∂2 + x1∂3 + (x1²/2)∂4 + x1x2∂5."""
    return parse_model({
        "name": "flat",
        "coordinates": list(BASE_VARIABLES),
        "X1": ["1", "0", "0", "0", "0"],
        "X2": ["0", "1", "x1", "x1^2/2", "x1*x2"],
        "points": [[0, 0, 0, 0, 0], [0.5, -0.3, 0.2, 0.1, -0.4], [1.2, 0.7, -0.9, 2.0, 0.3]],
        "expect": {"valid": True, "flat": True},
    })


def monge_model(f: str, name: str | None = None, points=None) -> Model:
    """z' = f(y'') in coordinates (x, u, p, q, z): X1 = ∂q, X2 = ∂x + p∂u + q∂p + f(q)∂z."""
    data = {
        "name": name or f"monge_{f}",
        "coordinates": ["x", "u", "p", "q", "z"],
        "X1": ["0", "0", "0", "1", "0"],
        "X2": ["1", "p", "q", "0", f],
        "expect": {"valid": True},
    }
    if points is not None:
        data["points"] = [list(p) for p in points]
    return parse_model(data)
