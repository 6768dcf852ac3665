"""Experiment configuration: JSON documents validated against a schema."""
from __future__ import annotations

import copy
import json
import os
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from ..abstraction import Abstraction, BenchmarkSpec, generate_benchmark
from ..errors import ConfigError, InvalidArgumentError
from ..mdp import GroundMDP
from .fixtures import FIXTURES

SCHEMA_VERSION = 1
KINDS = ("counterexample", "concentration", "value_bounds", "martingale", "simulator_sampling", "rmax_compare")

_pos_int = {"type": "integer", "minimum": 1}
_nonneg_int = {"type": "integer", "minimum": 0}
_pair = {"type": "array", "items": _nonneg_int, "minItems": 2, "maxItems": 2}
_prob_open = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}

_GENERATOR = {
    "type": "object",
    "required": ["n_abstract", "block_sizes", "n_actions", "target_eta_t", "target_eta_r"],
    "properties": {
        "n_abstract": _pos_int,
        "block_sizes": {"type": "array", "items": _pos_int, "minItems": 1},
        "n_actions": _pos_int,
        "target_eta_t": {"type": "number", "minimum": 0, "maximum": 2},
        "target_eta_r": {"type": "number", "minimum": 0},
        "r_max": {"type": "number", "exclusiveMinimum": 0},
        "seed": _nonneg_int,
    },
    "additionalProperties": False,
}

_INSTANCE = {
    "type": "object",
    "oneOf": [
        {"required": ["fixture"]},
        {"required": ["generator"]},
        {"required": ["mdp", "abstraction"]},
    ],
    "properties": {
        "fixture": {"enum": sorted(FIXTURES)},
        "generator": _GENERATOR,
        "mdp": {"type": "object"},
        "abstraction": {"type": "object"},
    },
    "additionalProperties": False,
}

_COMMON = {
    "schema_version": {"const": SCHEMA_VERSION},
    "kind": {"enum": list(KINDS)},
    "name": {"type": "string"},
    "seed": _nonneg_int,
    "output": {"type": "string"},
}

_KIND_RULES = {
    "counterexample": {
        "required": ["instance"],
        "properties": {
            "instance": _INSTANCE,
            "target": _pair,
            "method": {"enum": ["linear", "enumerate"]},
            "tolerance": {"type": "number", "exclusiveMinimum": 0},
            "expected": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["u", "v"],
                    "properties": {
                        "u": _nonneg_int, "v": _nonneg_int,
                        "joint": {"type": "number"}, "product": {"type": "number"},
                        "first": {"type": "number"}, "second": {"type": "number"},
                    },
                    "additionalProperties": False,
                },
            },
        },
    },
    "concentration": {
        "required": ["instance", "target", "n_values", "eps_values", "trials"],
        "properties": {
            "instance": _INSTANCE,
            "target": _pair,
            "n_values": {"type": "array", "items": _pos_int, "minItems": 1},
            "eps_values": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
            "trials": _pos_int,
            "step_cap": _pos_int,
            "sampler": {"enum": ["online"]},
            "start": _nonneg_int,
        },
    },
    "simulator_sampling": {
        "required": ["instance", "target", "n_values", "eps_values", "trials"],
        "properties": {
            "instance": _INSTANCE,
            "target": _pair,
            "n_values": {"type": "array", "items": _pos_int, "minItems": 1},
            "eps_values": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
            "trials": _pos_int,
            "sampler": {"enum": ["prototype", "cycle"]},
            "prototype_rule": {"enum": ["lowest", "random"]},
        },
    },
    "value_bounds": {
        "required": ["count"],
        "properties": {
            "count": _pos_int,
            "max_states": {"type": "integer", "minimum": 2},
            "max_actions": _pos_int,
            "max_horizon": _pos_int,
            "gammas": {"type": "array", "items": _prob_open, "minItems": 1},
            "max_eta_t": {"type": "number", "minimum": 0, "maximum": 2},
            "max_eta_r": {"type": "number", "minimum": 0},
            "model_eps": {"type": "number", "minimum": 0, "maximum": 1},
            "exact_share": {"type": "number", "minimum": 0, "maximum": 1},
            "tolerance": {"type": "number", "exclusiveMinimum": 0},
        },
    },
    "martingale": {
        "required": ["depth"],
        "properties": {
            "depth": _pos_int,
            "instance": _INSTANCE,
            "target": _pair,
            "random_instances": {
                "type": "object",
                "required": ["count"],
                "properties": {
                    "count": _nonneg_int,
                    "n_states": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
                    "n_abstract": {"type": "integer", "minimum": 1},
                    "n_actions": {"type": "array", "items": _pos_int, "minItems": 1},
                    "sparsity": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                },
                "additionalProperties": False,
            },
            "tolerance": {"type": "number", "exclusiveMinimum": 0},
        },
    },
    "rmax_compare": {
        "required": ["instance", "m_known", "delta", "eps", "t_eps", "seeds"],
        "properties": {
            "instance": _INSTANCE,
            "m_known": _pos_int,
            "delta": _prob_open,
            "eps": {"type": "number", "exclusiveMinimum": 0},
            "t_eps": {"oneOf": [_pos_int, {"const": "auto"}]},
            "seeds": _pos_int,
            "max_steps": _pos_int,
            "eval_window": _pos_int,
            "min_pass": _nonneg_int,
        },
    },
}


def _schema_for(kind: str) -> dict:
    rules = _KIND_RULES[kind]
    return {
        "type": "object",
        "required": ["schema_version", "kind", *rules["required"]],
        "properties": {**_COMMON, **rules["properties"]},
        "additionalProperties": False,
    }


CONFIG_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "kind"],
    "properties": _COMMON,
}


def validate_config(doc: Any) -> dict:
    """Check ``doc`` against the schema of its kind; raises :class:`ConfigError`."""
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
        jsonschema.validate(doc, _schema_for(doc["kind"]))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    return doc


def load_config(path: str | Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return validate_config(doc)


def load_template(kind: str) -> dict:
    """The bundled default config for ``kind``."""
    if kind not in KINDS:
        raise ConfigError(f"no template for kind {kind!r}; expected one of {KINDS}")
    text = resources.files(__package__).joinpath("templates", f"{kind}.json").read_text()
    return parse_config(text)


def dump_config(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def parse_config(text: str) -> dict:
    try:
        return validate_config(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc


def resolve_instance(spec: dict) -> tuple[GroundMDP, Abstraction]:
    """Turn an ``instance`` block into an (MDP, abstraction) pair."""
    spec = copy.deepcopy(spec)
    try:
        if "fixture" in spec:
            return FIXTURES[spec["fixture"]]()
        if "generator" in spec:
            return generate_benchmark(BenchmarkSpec.from_dict(spec["generator"]))
        return GroundMDP.from_dict(spec["mdp"]), Abstraction.from_dict(spec["abstraction"])
    except InvalidArgumentError as exc:
        raise ConfigError(f"bad instance: {exc}") from exc


def output_dir(doc: dict, default: str | Path = "results") -> Path:
    """Report directory: ``RLAO_OUTPUT_DIR`` overrides the config's ``output``."""
    env = os.environ.get("RLAO_OUTPUT_DIR")
    return Path(env) if env else Path(doc.get("output", default))


def worker_count() -> int:
    raw = os.environ.get("RLAO_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"RLAO_WORKERS must be an integer, got {raw!r}") from None
