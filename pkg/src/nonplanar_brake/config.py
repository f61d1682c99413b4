"""JSON configuration: schemas, loading and the shipped data pack.

Every document is validated against its schema before anything is built
from it; unknown fields are errors, and malformed JSON is reported with its
line and column.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from .conic_solver import ConicProgram
from .errors import ConfigError
from .force_model import VehicleParams
from .road_surface import RoadSurface
from .simulator import MODES, ScenarioConfig

NUM = {"type": "number"}
POS = {"type": "number", "exclusiveMinimum": 0}
NUM_LIST = {"type": "array", "items": NUM, "minItems": 2}

ROAD_SCHEMAS: dict[str, dict] = {
    "plane": {
        "type": "object",
        "properties": {"kind": {"const": "plane"}, "s_max": POS, "half_width": POS},
        "required": ["kind"],
        "additionalProperties": False,
    },
    "banked_arc": {
        "type": "object",
        "properties": {
            "kind": {"const": "banked_arc"},
            "radius": POS,  # m, positive turns left
            "bank_percent": NUM,  # negative is off-camber
            "arc_angle": POS,  # rad
            "half_width": POS,
        },
        "required": ["kind", "radius"],
        "additionalProperties": False,
    },
    "crest": {
        "type": "object",
        "properties": {
            "kind": {"const": "crest"},
            "vertical_radius": POS,  # m
            "s_max": POS,
            "half_width": POS,
            "apex_s": NUM,
        },
        "required": ["kind", "vertical_radius"],
        "additionalProperties": False,
    },
    "ribbon": {
        "type": "object",
        "properties": {
            "kind": {"const": "ribbon"},
            "s_max": POS,
            "half_width": POS,
            "heading0": NUM,  # rad
            "knots_s": NUM_LIST,  # m
            "kappa_c": NUM_LIST,  # 1/m
            "bank": NUM_LIST,  # rad, positive raises the right edge
            "grade": NUM_LIST,  # rad
            "description": {"type": "string"},
        },
        "required": ["kind", "s_max", "half_width", "knots_s", "kappa_c", "bank", "grade"],
        "additionalProperties": False,
    },
}

VEHICLE_SCHEMA = {
    "type": "object",
    "properties": {
        "m": POS, "I1": POS, "I2": POS, "I3": POS,  # kg, kg m^2
        "h": POS, "l_f": POS, "l_r": POS, "t_f": POS, "t_r": POS,  # m
        "mu": POS, "g": POS, "k_drag": NUM, "k_lift": NUM,
    },
    "additionalProperties": False,
}

_REF = {"oneOf": [{"type": "string"}, {"type": "object"}]}

SCENARIO_SCHEMA = {
    "type": "object",
    "properties": {
        "road": _REF,
        "vehicle": _REF,
        "v0": {"type": "number", "minimum": 0},
        "s_start": {"type": "number", "minimum": 0},
        "s_end": {"type": ["number", "null"]},
        "lane_offset": NUM,
        "mode": {"enum": list(MODES)},
        "N": {"type": "integer", "minimum": 2},
        "B_profile": {"oneOf": [NUM, {"type": "array", "items": NUM}]},
        "driver_delay": {"type": ["number", "null"], "minimum": 0},
        "driver_brake": {"type": "number", "minimum": 0},
        "t_max": POS,
        "expect": {"enum": ["complete", "depart", None]},
        "outputs": {
            "type": "object",
            "properties": {"csv": {"type": "string"}, "summary": {"type": "string"}},
            "additionalProperties": False,
        },
        "description": {"type": "string"},
    },
    "required": ["v0"],
    "additionalProperties": False,
}

CONIC_SCHEMA = {
    "type": "object",
    "properties": {
        "c": {"type": "array", "items": NUM},
        "A": {"type": "array", "items": {"type": "array", "items": NUM}},
        "b": {"type": "array", "items": NUM},
        "G": {"type": "array", "items": {"type": "array", "items": NUM}},
        "h": {"type": "array", "items": NUM},
        "cones": {
            "type": "object",
            "properties": {
                "l": {"type": "integer", "minimum": 0},
                "q": {"type": "array", "items": {"type": "integer", "minimum": 1}},
            },
            "required": ["l"],
            "additionalProperties": False,
        },
        "names": {"type": "array", "items": {"type": "string"}},
    },
    "required": ["c", "G", "h", "cones"],
    "additionalProperties": False,
}


def read_json(path: str | Path) -> Any:
    """Parse a JSON file; syntax errors become ``ConfigError`` with line and column."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def validate(doc: Any, schema: dict, what: str) -> None:
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid {what} at {where}: {exc.message}") from exc


def road_from_doc(doc: Any) -> RoadSurface:
    if not isinstance(doc, dict) or doc.get("kind") not in ROAD_SCHEMAS:
        kinds = ", ".join(ROAD_SCHEMAS)
        raise ConfigError(f"road needs a 'kind' field, one of: {kinds}")
    validate(doc, ROAD_SCHEMAS[doc["kind"]], "road")
    body = {k: v for k, v in doc.items() if k != "description"}
    try:
        return RoadSurface.from_dict(body)
    except ValueError as exc:
        raise ConfigError(f"invalid road: {exc}") from exc


def vehicle_from_doc(doc: Any) -> VehicleParams:
    validate(doc, VEHICLE_SCHEMA, "vehicle")
    return VehicleParams.from_dict(doc)


def program_from_doc(doc: Any) -> ConicProgram:
    validate(doc, CONIC_SCHEMA, "conic program")
    try:
        return ConicProgram.from_dict(doc)
    except ValueError as exc:
        raise ConfigError(f"invalid conic program: {exc}") from exc


def load_road(path) -> RoadSurface:
    return road_from_doc(read_json(path))


def load_vehicle(path) -> VehicleParams:
    return vehicle_from_doc(read_json(path))


def load_program(path) -> ConicProgram:
    return program_from_doc(read_json(path))


class Scenario:
    """A validated scenario document with its road and vehicle resolved."""

    def __init__(self, config: ScenarioConfig, road: RoadSurface | None,
                 vehicle: VehicleParams | None, outputs: dict, description: str = "",
                 base: Path = Path(".")):
        self.config = config
        self.road = road
        self.vehicle = vehicle
        self.outputs = outputs
        self.description = description
        self.base = Path(base)  # directory that relative paths are resolved against


def _resolve(ref, base: Path, loader_doc, what):
    if ref is None:
        return None
    if isinstance(ref, dict):
        return loader_doc(ref)
    path = Path(ref)
    if not path.is_absolute():
        path = base / path
    if not path.exists():
        raise ConfigError(f"{what} file not found: {path}")
    return loader_doc(read_json(path))


def scenario_from_doc(doc: Any, base: str | Path = ".") -> Scenario:
    validate(doc, SCENARIO_SCHEMA, "scenario")
    base = Path(base)
    road = _resolve(doc.get("road"), base, road_from_doc, "road")
    vehicle = _resolve(doc.get("vehicle"), base, vehicle_from_doc, "vehicle")
    core = {k: v for k, v in doc.items() if k not in ("road", "vehicle", "outputs", "description")}
    return Scenario(ScenarioConfig.from_dict(core), road, vehicle, doc.get("outputs", {}),
                    doc.get("description", ""), base)


def load_scenario(path) -> Scenario:
    path = Path(path)
    return scenario_from_doc(read_json(path), path.parent)


# -- shipped data -----------------------------------------------------------------------


def data_path(*parts: str) -> Path:
    """Path of a file in the shipped data pack."""
    node = resources.files("nonplanar_brake").joinpath("data")
    for part in parts:
        node = node.joinpath(part)
    return Path(str(node))


def shipped_scenarios() -> list[Path]:
    return sorted(data_path("scenarios").glob("*.json"))
