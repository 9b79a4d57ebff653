"""Run configuration: JSON schema, defaults, dotted overrides and sweep grids."""

from __future__ import annotations

import copy
import itertools
import json
from pathlib import Path
from typing import Any, Optional

import jsonschema
import numpy as np

from .filtration import kind_from_dict
from .pimage import PIParams, weighting_from_dict
from .pullback import EncodingSpec


class ConfigError(ValueError):
    pass


FILTRATION_DEFAULTS = {
    "rips": {"max_edge": 1.0},
    "dtm": {"max_edge": 0.5, "m": 0.02},
    "height": {"max_edge": 0.1, "direction": [1.0, 0.0]},
}

WEIGHTING_DEFAULTS = {
    "linear": {"l_max": 1.0},
    "beta": {"k_mean": 0.5, "s2": 0.065, "kappa": 1.0},
}

DEFAULTS: dict = {
    "dataset": {},
    "encoding": {
        "filtration": {"kind": "rips"},
        "k": 1,
        "max_dim": None,
        "cap": None,
        "pi": {
            "resolution": 20,
            "variance": 1e-4,
            "x_range": [0.0, 1.0],
            "y_range": [0.0, 1.0],
            "weighting": {"kind": "linear"},
            "quad": "corner",
        },
    },
    "encodings": None,
    "perturbations": ["rotation", "translation", "dilation", "stretch_x", "shearing",
                      "noising", "wiggly", "convex"],
    "perturbation_rel": 1e-3,
    "normalize_fields": True,
    "field": "gradient",
    "grid": {},
    "top_k": 4,
    "rank_rtol": 1e-10,
    "decay_threshold": 1e-5,
    "seed": 0,
    "threads": None,
}

_num = {"type": "number"}
_range = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_grid_axis = {"oneOf": [{"type": "string", "pattern": r"^[^:]+:[^:]+:\d+(:(lin|log))?$"},
                        {"type": "array", "items": _num, "minItems": 1}]}

ENCODING_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "filtration": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["rips", "dtm", "height"]},
                "max_edge": {"type": "number", "exclusiveMinimum": 0},
                "k_neighbors": {"type": ["integer", "null"], "minimum": 1},
                "m": {"type": ["number", "null"], "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "direction": {"type": "array", "items": _num, "minItems": 1},
            },
        },
        "k": {"type": "integer", "minimum": 0},
        "max_dim": {"type": ["integer", "null"], "minimum": 1, "maximum": 3},
        "cap": {"type": ["number", "null"]},
        "pi": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "resolution": {"type": "integer", "minimum": 1},
                "variance": {"type": "number", "exclusiveMinimum": 0},
                "x_range": _range,
                "y_range": _range,
                "quad": {"enum": ["corner", "center"]},
                "weighting": {
                    "type": "object",
                    "required": ["kind"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["linear", "beta"]},
                        "l_max": {"type": "number", "exclusiveMinimum": 0},
                        "k_mean": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                        "s2": {"type": "number", "exclusiveMinimum": 0},
                        "kappa": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
            },
        },
    },
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "generator": {
                    "type": "object",
                    "required": ["family"],
                    "properties": {"family": {"enum": ["rfp", "ellipse", "circles"]}},
                },
            },
        },
        "encoding": ENCODING_SCHEMA,
        "encodings": {"type": ["array", "null"], "items": ENCODING_SCHEMA, "minItems": 1},
        "perturbations": {
            "type": "array",
            "items": {"enum": DEFAULTS["perturbations"]},
            "minItems": 1,
        },
        "perturbation_rel": {"type": "number", "minimum": 0},
        "normalize_fields": {"type": "boolean"},
        "field": {"type": "string"},
        "grid": {"type": "object", "additionalProperties": _grid_axis},
        "top_k": {"type": "integer", "minimum": 1},
        "rank_rtol": {"type": "number", "exclusiveMinimum": 0},
        "decay_threshold": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer"},
        "threads": {"type": ["integer", "null"], "minimum": 1},
        "out": {"type": "string"},
    },
}


def deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_value(text: str) -> Any:
    """JSON literal if it parses, else the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def set_dotted(cfg: dict, key: str, value: Any) -> None:
    parts = key.split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = value


def get_dotted(cfg: dict, key: str, default=None):
    node = cfg
    for p in key.split("."):
        if not isinstance(node, dict) or p not in node:
            return default
        node = node[p]
    return node


def apply_overrides(cfg: dict, pairs) -> dict:
    cfg = copy.deepcopy(cfg)
    for item in pairs or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        set_dotted(cfg, k.strip(), parse_value(v.strip()))
    return cfg


def load_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from None


def validate(cfg: dict) -> dict:
    errors = sorted(jsonschema.Draft7Validator(SCHEMA).iter_errors(cfg), key=lambda e: [str(p) for p in e.path])
    if errors:
        lines = [f"{'.'.join(map(str, e.path)) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError("invalid config:\n  " + "\n  ".join(lines))
    for key in cfg.get("grid", {}):
        if key.split(".")[0] not in ("filtration", "pi", "k", "cap", "max_dim"):
            raise ConfigError(f"grid.{key}: not an encoding parameter")
    return cfg


def build_config(file: Optional[str] = None, overrides=None, cli: Optional[dict] = None) -> dict:
    """Defaults <- config file <- explicit CLI flags <- --set overrides, then validated."""
    cfg = copy.deepcopy(DEFAULTS)
    if file:
        cfg = deep_merge(cfg, load_config_file(file))
    if cli:
        cfg = deep_merge(cfg, cli)
    cfg = apply_overrides(cfg, overrides)
    return validate(cfg)


def grid_values(axis) -> list:
    """``start:stop:count[:lin|log]`` or an explicit list."""
    if isinstance(axis, list):
        return list(axis)
    parts = axis.split(":")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"bad grid {axis!r}") from None
    mode = parts[3] if len(parts) > 3 else "lin"
    if count < 1:
        raise ConfigError(f"grid {axis!r} is empty")
    if mode == "log":
        if start <= 0 or stop <= 0:
            raise ConfigError(f"log grid {axis!r} needs positive endpoints")
        vals = np.geomspace(start, stop, count)
    else:
        vals = np.linspace(start, stop, count)
    return [float(v) for v in vals]


def grid_cells(grid: dict) -> tuple[list, list]:
    """(keys, list of value tuples) in row-major order over the grid axes."""
    keys = list(grid)
    axes = [grid_values(grid[k]) for k in keys]
    if any(len(a) == 0 for a in axes):
        raise ConfigError("sweep grids must be nonempty")
    return keys, list(itertools.product(*axes)) if keys else [()]


_INT_KEYS = {"pi.resolution", "k", "max_dim", "filtration.k_neighbors"}


def with_cell(encoding: dict, keys, values) -> dict:
    enc = copy.deepcopy(encoding)
    for k, v in zip(keys, values):
        set_dotted(enc, k, int(round(v)) if k in _INT_KEYS else v)
    return enc


def encoding_spec(enc: dict) -> EncodingSpec:
    """EncodingSpec from an ``encoding`` block, filling per-kind defaults."""
    f = dict(enc.get("filtration", {"kind": "rips"}))
    kind = f.get("kind", "rips")
    fdict = {**FILTRATION_DEFAULTS[kind], **{k: v for k, v in f.items() if v is not None}}
    if kind == "dtm" and f.get("k_neighbors") is not None:
        fdict.pop("m", None)
    pi = dict(enc.get("pi", {}))
    w = dict(pi.pop("weighting", {"kind": "linear"}))
    wkind = w.get("kind", "linear")
    wdict = {**WEIGHTING_DEFAULTS[wkind], **w}
    try:
        params = PIParams(
            resolution=int(pi.get("resolution", 20)),
            variance=float(pi.get("variance", 1e-4)),
            x_range=tuple(pi.get("x_range", (0.0, 1.0))),
            y_range=tuple(pi.get("y_range", (0.0, 1.0))),
            weighting=weighting_from_dict(wdict),
            quad=pi.get("quad", "corner"),
        )
        return EncodingSpec(kind_from_dict(fdict), int(enc.get("k", 1)), params,
                            enc.get("max_dim"), enc.get("cap"))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"encoding: {e}") from None


def encoding_to_dict(spec: EncodingSpec) -> dict:
    from .filtration import kind_to_dict
    from .pimage import weighting_to_dict
    return {
        "filtration": kind_to_dict(spec.filtration),
        "k": spec.k,
        "max_dim": spec.max_dim,
        "cap": spec.cap,
        "pi": {
            "resolution": spec.pi.resolution,
            "variance": spec.pi.variance,
            "x_range": list(spec.pi.x_range),
            "y_range": list(spec.pi.y_range),
            "weighting": weighting_to_dict(spec.pi.weighting),
            "quad": spec.pi.quad,
        },
    }
