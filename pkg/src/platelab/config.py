"""Run configuration: JSON files validated against a versioned schema."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import jsonschema

from .errors import ConfigError

__all__ = ["SCHEMA", "SCHEMA_VERSION", "DEFAULT_TOLERANCES", "load_config", "validate_config", "config_hash",
           "canonical_json"]

SCHEMA_VERSION = 1

DEFAULT_TOLERANCES = {
    "tau_rank": 1e-7,
    "tau_angle": 1e-6,
    "compat_rtol": 1e-6,
    "mean_rtol": 1e-6,
    "dev_rtol": 1e-2,
    "curl_rtol": 0.1,
    "tau_grad": 1e-8,
    "divergence_factor": 1e12,
    "probe_tol": 1e-8,
}

_pos = {"type": "number", "exclusiveMinimum": 0}
_num = {"type": "number"}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "platelab run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "domain": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"bounds": {"type": "array", "items": _num, "minItems": 4, "maxItems": 4}},
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n1": {"type": "integer", "minimum": 5},
                "n2": {"type": "integer", "minimum": 5},
            },
        },
        "load": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "catalog": {"type": "string"},
                "params": {"type": "object"},
                "file": {"type": "string"},
            },
            "oneOf": [{"required": ["catalog"]}, {"required": ["file"]}],
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"lambda": _num, "mu": _pos},
        },
        "stability": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"s1_probe": {"type": "boolean"}, "s2_probe": {"type": "boolean"}},
        },
        "minimize": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_starts": {"type": "integer", "minimum": 1},
                "maxiter": {"type": "integer", "minimum": 1},
                "epsilon": _num,
                "init_scale": _pos,
                "seed": {"type": "integer", "minimum": 0},
                "ray_gammas": {"type": "array", "items": _pos, "minItems": 2},
                "precondition": {"type": "boolean"},
                "probe": {"type": "boolean"},
            },
        },
        "scaling": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "family": {"enum": ["vk", "kl", "rigid"]},
                "h_values": {"type": "array", "items": _pos, "minItems": 4},
                "delta": _pos,
                "n3": {"type": "integer", "minimum": 3},
                "max_refinements": {"type": "integer", "minimum": 0},
            },
        },
        "embed": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "profile": {"enum": ["zero", "sine", "ridge", "quadratic"]},
                "amplitude": _num,
                "direction": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                "offset": _num,
                "frequency": _num,
                "hessian": {
                    "type": "array",
                    "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                    "minItems": 2,
                    "maxItems": 2,
                },
            },
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: _pos for k in DEFAULT_TOLERANCES},
        },
    },
}

DEFAULTS = {
    "domain": {"bounds": [-0.5, 0.5, -0.5, 0.5]},
    "grid": {"n1": 33, "n2": 33},
    "load": {"catalog": "example_b", "params": {}},
    "model": {"lambda": 1.0, "mu": 1.0},
    "stability": {"s1_probe": True, "s2_probe": True},
    "minimize": {"n_starts": 8, "maxiter": 2000, "epsilon": 0.0, "init_scale": 1e-2, "seed": 0,
                 "ray_gammas": [10.0, 100.0, 1000.0], "precondition": True, "probe": True},
    "scaling": {"family": "vk", "h_values": [2.0**-k for k in range(3, 8)], "delta": 1e-2, "n3": 9,
                "max_refinements": 3},
    "embed": {"profile": "sine", "amplitude": 0.2, "direction": [1.0, 0.0], "offset": 0.0, "frequency": 1.0,
              "hessian": [[1.0, 0.0], [0.0, 0.0]]},
    "tolerances": dict(DEFAULT_TOLERANCES),
}


def _key_line(text: str, path) -> int | None:
    """Line of the last key in ``path`` (searched in order, so nested keys resolve to their parent's block)."""
    pos = 0
    line = None
    for key in path:
        if not isinstance(key, str):
            continue
        idx = text.find(f'"{key}"', pos)
        if idx < 0:
            break
        pos = idx + 1
        line = text.count("\n", 0, idx) + 1
    return line


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "params":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate_config(cfg: dict, text: str | None = None, source: str = "<config>") -> dict:
    """Validate and fill defaults; errors name the offending line when the source text is known."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(map(str, e.path)))
    if errors:
        msgs = []
        for e in errors:
            path = list(e.path)
            if e.validator == "additionalProperties":
                extra = [k for k in e.instance if k not in e.schema.get("properties", {})]
                path = path + extra[:1]
            line = _key_line(text, path) if text is not None else None
            where = f"{source}:{line}" if line else source
            loc = "/".join(map(str, path)) or "<root>"
            msgs.append(f"{where}: {loc}: {e.message}")
        raise ConfigError("invalid configuration\n  " + "\n  ".join(msgs))
    full = _merge(DEFAULTS, cfg)
    b = full["domain"]["bounds"]
    if not (b[0] < b[1] and b[2] < b[3]):
        raise ConfigError(f"{source}: domain/bounds: need x1min < x1max and x2min < x2max, got {b}")
    return full


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: malformed JSON: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}:1: configuration must be a JSON object")
    return validate_config(cfg, text, str(path))


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()
