"""File formats: canonical JSON, CSV samples and JSON-schema validated configs."""
from __future__ import annotations

import csv
import json
import math

import jsonschema
import numpy as np

from .constraints import SPEC_TYPES, spec_from_dict
from .epispline import EpiSpline
from .geometry import BoxDomain
from .hypodist import HypoDistanceConfig
from .losses import LOSS_KINDS, Sample
from .solver import SolverConfig


class ConfigError(ValueError):
    """Schema or semantic error in a configuration file."""


# -- canonical JSON --------------------------------------------------------------------


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "NaN"
        if math.isinf(x):
            return "Infinity" if x > 0 else "-Infinity"
        return format(x, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(obj[k], indent, level + 1)}" for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in seq) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_json(obj, indent: int = 1) -> str:
    """Sorted keys, 17 significant digits for floats, trailing newline."""
    return _encode(obj, indent, 0) + "\n"


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(obj))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON ({exc})") from None


# -- CSV ---------------------------------------------------------------------------------


def read_sample_csv(path, box: BoxDomain, regression: bool = False) -> Sample:
    """d columns (density) or d+1 columns with the response last; header optional."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                if i == 0 and not rows:
                    continue  # header
                raise ConfigError(f"{path}: non-numeric entry on line {i + 1}") from None
    if not rows:
        raise ConfigError(f"{path}: empty sample")
    data = np.array(rows, dtype=float)
    want = box.dim + (1 if regression else 0)
    if data.shape[1] != want:
        raise ConfigError(f"{path}: expected {want} columns, found {data.shape[1]}")
    if regression:
        return Sample.within_box(data[:, :-1], box, data[:, -1])
    return Sample.within_box(data, box)


def write_sample_csv(path, sample: Sample) -> None:
    d = sample.dim
    cols = [sample.covariates]
    header = [f"x{i + 1}" for i in range(d)]
    if sample.responses is not None:
        cols.append(sample.responses[:, None])
        header.append("y")
    np.savetxt(path, np.hstack(cols), delimiter=",", header=",".join(header), comments="", fmt="%.17g")


# -- schemas -----------------------------------------------------------------------------

_NUM = {"type": "number"}
_NUM_OR_NULL = {"type": ["number", "null"]}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_POINTS = {"type": "array", "items": _VEC, "minItems": 1}
_BOUND = {"anyOf": [_NUM_OR_NULL, _VEC]}


def _spec_schema(name: str, props: dict, required=()) -> dict:
    return {
        "type": "object",
        "properties": {"type": {"const": name}, **props},
        "required": ["type", *required],
        "additionalProperties": False,
    }


CONSTRAINT_SCHEMA = {
    "type": "object",
    "required": ["type"],
    "properties": {"type": {"enum": sorted(SPEC_TYPES)}},
    "allOf": [
        {"if": {"properties": {"type": {"const": name}}}, "then": schema}
        for name, schema in {
            "Nonnegativity": _spec_schema("Nonnegativity", {}),
            "IntegralEquals": _spec_schema("IntegralEquals", {"target": _NUM}),
            "IntegralBand": _spec_schema("IntegralBand", {"target": _NUM, "delta": {"type": "number", "minimum": 0}}),
            "ArgmaxCovers": _spec_schema("ArgmaxCovers", {"points": _POINTS}, ["points"]),
            "LevelSetCovers": _spec_schema("LevelSetCovers", {"points": _POINTS, "alpha": _NUM}, ["points", "alpha"]),
            "PointwiseBounds": _spec_schema("PointwiseBounds", {"lower": _BOUND, "upper": _BOUND}),
            "Continuity": _spec_schema("Continuity", {}),
            "LipschitzBound": _spec_schema("LipschitzBound", {"kappa": {"type": "number", "minimum": 0},
                                                              "norm": {"enum": ["euclidean", "max", "one"]}},
                                           ["kappa"]),
            "Monotone": _spec_schema("Monotone", {"direction": {"type": "array", "items": {"enum": [-1, 0, 1]}}},
                                     ["direction"]),
            "Concavity": _spec_schema("Concavity", {}),
            "MomentBox": _spec_schema("MomentBox", {"lower": _VEC, "upper": _VEC}, ["lower", "upper"]),
        }.items()
    ],
}

SOLVER_SCHEMA = {
    "type": "object",
    "properties": {
        "tol_gap": {"type": "number", "exclusiveMinimum": 0},
        "max_iters": {"type": "integer", "minimum": 1},
        "barrier_init": _NUM_OR_NULL,
        "barrier_reduction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "backtrack": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "armijo": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
        "centering_tol": {"type": "number", "exclusiveMinimum": 0},
        "dense_threshold": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}

HYPODIST_SCHEMA = {
    "type": "object",
    "properties": {
        "center": {"anyOf": [{"type": "null"}, _VEC]},
        "norm": {"enum": ["euclidean", "max"]},
        "rho_max": {"type": "number", "exclusiveMinimum": 0},
        "rho_nodes": {"type": "integer", "minimum": 8},
        "ball_samples": {"type": "integer", "minimum": 64},
        "seed": {"type": "integer"},
    },
    "additionalProperties": False,
}

BOX_SCHEMA = {
    "type": "object",
    "properties": {"lower": _VEC, "upper": _VEC},
    "required": ["lower", "upper"],
    "additionalProperties": False,
}

_CELLS = {"anyOf": [{"type": "integer", "minimum": 1},
                    {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1}]}

PROBLEM_SCHEMA = {
    "type": "object",
    "properties": {
        "box": BOX_SCHEMA,
        "loss": {"type": "object", "properties": {"kind": {"enum": list(LOSS_KINDS)}},
                 "required": ["kind"], "additionalProperties": False},
        "penalty": {"type": "object", "properties": {"lambda": {"type": "number", "minimum": 0}},
                    "additionalProperties": False},
        "constraints": {"type": "array", "items": CONSTRAINT_SCHEMA},
        "schedule": {"type": "array", "items": _CELLS, "minItems": 1},
        "epsilon": {"type": "number", "minimum": 0},
        "epsilon_schedule": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "stop": {"type": "object",
                 "properties": {"objective_tol": {"type": "number", "minimum": 0},
                                "dl_tol": {"type": "number", "minimum": 0}},
                 "additionalProperties": False},
        "solver": SOLVER_SCHEMA,
        "hypodist": HYPODIST_SCHEMA,
        "seed": {"type": "integer"},
    },
    "required": ["box", "loss", "schedule"],
    "additionalProperties": False,
}

STUDY_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["consistency", "scaling"]},
        "mixture": {
            "type": "object",
            "properties": {
                "lower": _VEC, "upper": _VEC,
                "components": {"type": "array", "minItems": 1, "items": {
                    "type": "object",
                    "properties": {"lower": _VEC, "upper": _VEC, "weight": {"type": "number", "minimum": 0}},
                    "required": ["lower", "upper", "weight"], "additionalProperties": False}},
            },
            "required": ["lower", "upper", "components"],
            "additionalProperties": False,
        },
        "sample_sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "seeds": {"anyOf": [{"type": "integer", "minimum": 1},
                            {"type": "array", "items": {"type": "integer"}, "minItems": 1}]},
        "schedule": {"type": "array", "items": _CELLS, "minItems": 1},
        "partitions": {"type": "array", "items": _CELLS, "minItems": 1},
        "penalty": {"type": "number", "minimum": 0},
        "constraints": {"type": "array", "items": CONSTRAINT_SCHEMA},
        "kl_samples": {"type": "integer", "minimum": 2},
        "epsilon": {"type": "number", "minimum": 0},
        "hypodist": HYPODIST_SCHEMA,
        "threads": {"type": "integer", "minimum": 1},
    },
    "required": ["kind"],
    "additionalProperties": False,
}


def validate(data, schema, what: str) -> None:
    """Raise ConfigError listing every schema violation with its path."""
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(data), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        parts = []
        for err in errors:
            path = "/".join(str(p) for p in err.absolute_path) or "<root>"
            parts.append(f"invalid value at '{path}': {err.message}")
        raise ConfigError(f"{what}: " + "; ".join(parts))


def problem_from_dict(data: dict):
    """Validated ProblemConfig -> EstimationConfig."""
    from .estimate import EstimationConfig

    validate(data, PROBLEM_SCHEMA, "problem config")
    try:
        box = BoxDomain(data["box"]["lower"], data["box"]["upper"])
        specs = [spec_from_dict(c) for c in data.get("constraints", [])]
        stop = data.get("stop", {})
        return EstimationConfig(
            box=box,
            loss=data["loss"]["kind"],
            penalty=float(data.get("penalty", {}).get("lambda", 0.0)),
            constraints=specs,
            schedule=list(data["schedule"]),
            epsilon=float(data.get("epsilon", 1e-6)),
            epsilon_schedule=data.get("epsilon_schedule"),
            stop_objective_tol=float(stop.get("objective_tol", 1e-4)),
            stop_dl_tol=float(stop.get("dl_tol", 1e-3)),
            hypodist=HypoDistanceConfig(**data.get("hypodist", {})),
            solver=SolverConfig(**data.get("solver", {})),
            seed=int(data.get("seed", 0)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"problem config: {exc}") from None


def hypodist_from_dict(data: dict | None) -> HypoDistanceConfig:
    data = data or {}
    validate(data, HYPODIST_SCHEMA, "hypodist config")
    return HypoDistanceConfig(**data)


def load_model(path) -> EpiSpline:
    """Model file, or an estimate output holding a ``model`` entry."""
    data = read_json(path)
    if isinstance(data, dict) and "model" in data:
        data = data["model"]
    try:
        return EpiSpline.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: not a model file ({exc})") from None
