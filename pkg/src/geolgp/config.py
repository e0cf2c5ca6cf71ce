"""Run configuration: JSON schema, loading and defaults."""
from __future__ import annotations

import copy
import json
import os

import jsonschema

from .errors import InvalidInput

CHECKS = ("convexity", "duality", "noncrossing_cost", "ray_crossings", "mass_balance",
          "divergence", "dual_field", "lipschitz", "reconstruction", "level_sets", "jacobian",
          "lp_norms")

_num = {"type": "number"}
_point = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["domain", "weight", "boundary_datum", "grid", "atoms"],
    "properties": {
        "domain": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["circle", "ellipse", "smooth-polar"]},
                "radius": {"type": "number", "exclusiveMinimum": 0},
                "a": {"type": "number", "exclusiveMinimum": 0},
                "b": {"type": "number", "exclusiveMinimum": 0},
                "radii": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 3},
                "center": _point,
            },
            "allOf": [
                {"if": {"properties": {"kind": {"const": "ellipse"}}}, "then": {"required": ["a", "b"]}},
                {"if": {"properties": {"kind": {"const": "smooth-polar"}}}, "then": {"required": ["radii"]}},
            ],
        },
        "weight": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family"],
            "properties": {
                "family": {"enum": ["constant", "radial-bump", "bilinear-grid"]},
                "a": _num,
                "b": _num,
                "center": _point,
                "width": {"type": "number", "exclusiveMinimum": 0},
                "path": {"type": "string"},
            },
            "allOf": [
                {"if": {"properties": {"family": {"const": "radial-bump"}}}, "then": {"required": ["a", "b"]}},
                {"if": {"properties": {"family": {"const": "bilinear-grid"}}}, "then": {"required": ["path"]}},
            ],
        },
        "boundary_datum": {
            "type": "object",
            "additionalProperties": False,
            "required": ["pieces"],
            "properties": {
                "pieces": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["from", "to", "kind"],
                        "properties": {
                            "from": _num,
                            "to": _num,
                            "kind": {"enum": ["constant", "affine", "sinusoid", "power"]},
                            "params": {
                                "type": "object",
                                "additionalProperties": False,
                                "properties": {k: _num for k in
                                               ("value", "a", "b", "amp", "freq", "phase", "offset", "exponent")},
                            },
                        },
                    },
                },
                "jumps": {
                    "type": "array",
                    "items": {"type": "object", "additionalProperties": False, "required": ["at", "height"],
                              "properties": {"at": _num, "height": _num}},
                },
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 2},
                "h": {"type": "number", "exclusiveMinimum": 0},
            },
            "oneOf": [{"required": ["n"]}, {"required": ["h"]}],
        },
        "atoms": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n_source", "n_target"],
            "properties": {
                "n_source": {"type": "integer", "minimum": 1},
                "n_target": {"type": "integer", "minimum": 1},
                "scheme": {"enum": ["mass", "arclength"]},
                "spacing": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "rays": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_points": {"type": "integer", "minimum": 8},
                "mode": {"enum": ["direct", "fan"]},
            },
        },
        "solver": {"enum": ["noncrossing", "lp"]},
        "tau_split": {"type": "number", "minimum": 0, "maximum": 1},
        "p_values": {"type": "array", "items": {"type": "number", "minimum": 1}},
        "checks": {"type": "array", "items": {"enum": list(CHECKS)}, "uniqueItems": True},
        "seed": {"type": "integer", "minimum": 0},
        "out_dir": {"type": "string"},
    },
}

DEFAULTS = {
    "rays": {"n_points": 256, "mode": "direct"},
    "solver": "noncrossing",
    "tau_split": 0.5,
    "p_values": [1, 2],
    "checks": ["duality", "noncrossing_cost", "ray_crossings", "mass_balance", "divergence",
               "dual_field", "reconstruction", "level_sets", "lp_norms"],
    "seed": 0,
    "out_dir": "out",
}


def _path(err):
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def validate(cfg):
    """List of human-readable schema errors (empty when valid)."""
    v = jsonschema.Draft202012Validator(SCHEMA)
    errs = sorted(v.iter_errors(cfg), key=lambda e: (_path(e), e.message))
    return [f"{_path(e)}: {e.message}" for e in errs]


def load(path):
    """Read, validate and fill defaults.  Raises InvalidInput on schema errors."""
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidInput(f"{path}: not valid JSON ({exc})") from None
    errs = validate(cfg)
    if errs:
        raise InvalidInput("; ".join(errs))
    return with_defaults(cfg), os.path.dirname(os.path.abspath(path))


def with_defaults(cfg):
    out = copy.deepcopy(cfg)
    for k, v in DEFAULTS.items():
        if k not in out:
            out[k] = copy.deepcopy(v)
        elif isinstance(v, dict):
            merged = copy.deepcopy(v)
            merged.update(out[k])
            out[k] = merged
    return out
