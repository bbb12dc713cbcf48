"""Experiment configuration: JSON schema, defaults and model construction."""
from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema
import numpy as np

from .integrator import (
    SPDEModel,
    additive_coefficients,
    linear_coefficients,
    saturating_coefficients,
    zero_coefficients,
)
from .noise import AtomMarks, GaussianMarks, UniformBoxMarks
from .operators import DiagonalGenerator, laplacian_dirichlet

EXPERIMENTS = (
    "certify_operator",
    "noise_checks",
    "simulate",
    "yosida_gap",
    "stability",
    "contraction",
    "invariant",
)
PRESETS = ("zero", "linear", "additive", "saturating")
MARK_FAMILIES = ("atoms", "gaussian", "uniform_box")

_nonneg = {"type": "number", "minimum": 0}
_vector = {"type": "array", "items": {"type": "number"}, "minItems": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["experiment", "model", "noise"],
    "additionalProperties": False,
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "model": {
            "type": "object",
            "required": ["family"],
            "additionalProperties": False,
            "properties": {
                "family": {"enum": ["laplacian_dirichlet", "explicit"]},
                "n_modes": {"type": "integer", "minimum": 1},
                "eigenvalues": _vector,
            },
        },
        "coefficients": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"enum": list(PRESETS)},
                "drift_scale": {"type": "number"},
                "jump_scale": {"type": "number"},
                "scale": {"type": "number"},
                "mark_map": {"type": "array", "items": _vector, "minItems": 1},
                "L_F": _nonneg,
                "L_f": _nonneg,
            },
        },
        "noise": {
            "type": "object",
            "required": ["rate", "mark_family"],
            "additionalProperties": False,
            "properties": {
                "rate": _nonneg,
                "mark_family": {
                    "type": "object",
                    "required": ["type"],
                    "properties": {
                        "type": {"enum": list(MARK_FAMILIES)},
                        "points": {"type": "array", "minItems": 1},
                        "weights": {"type": "array", "items": _nonneg},
                        "mean": _vector,
                        "var": {"type": "array", "items": _nonneg, "minItems": 1},
                        "low": _vector,
                        "high": _vector,
                    },
                },
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "T": {"type": "number", "exclusiveMinimum": 0},
                "steps": {"type": "integer", "minimum": 1},
            },
        },
        "mc": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "paths": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
            },
        },
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"xi": _vector, "eta": _vector},
        },
        "params": {"type": "object"},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"directory": {"type": "string"}},
        },
    },
}

DEFAULTS = {
    "coefficients": {"preset": "zero"},
    "grid": {"T": 1.0, "steps": 1000},
    "mc": {"paths": 10_000, "seed": 0},
    "output": {"directory": "results"},
    "params": {},
}


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def _field_path(err) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        missing = err.message.split("'")[1] if "'" in err.message else ""
        parts.append(missing)
    return ".".join(p for p in parts if p)


def validate_config(cfg: dict) -> dict:
    """Schema-check ``cfg``, fill defaults and run cross-field checks."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (len(e.absolute_path), e.path))
    if errors:
        err = errors[0]
        msg = err.message
        if err.validator == "enum":
            msg = f"{err.instance!r} is not one of {', '.join(map(str, err.validator_value))}"
        raise ConfigError(msg, _field_path(err))
    out = copy.deepcopy(cfg)
    for key, default in DEFAULTS.items():
        merged = copy.deepcopy(default)
        merged.update(out.get(key, {}))
        out[key] = merged

    model = out["model"]
    if model["family"] == "laplacian_dirichlet" and "n_modes" not in model:
        raise ConfigError("required for laplacian_dirichlet", "model.n_modes")
    if model["family"] == "explicit" and "eigenvalues" not in model:
        raise ConfigError("required for explicit", "model.eigenvalues")
    fam = out["noise"]["mark_family"]
    need = {"atoms": ["points"], "gaussian": ["mean", "var"], "uniform_box": ["low", "high"]}[fam["type"]]
    for key in need:
        if key not in fam:
            raise ConfigError(f"required for {fam['type']} marks", f"noise.mark_family.{key}")
    return out


def load_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return validate_config(cfg)


def build_generator(model_cfg: dict) -> DiagonalGenerator:
    if model_cfg["family"] == "laplacian_dirichlet":
        return laplacian_dirichlet(int(model_cfg["n_modes"]))
    return DiagonalGenerator(model_cfg["eigenvalues"])


def build_measure(noise_cfg: dict):
    fam = noise_cfg["mark_family"]
    rate = noise_cfg["rate"]
    try:
        if fam["type"] == "atoms":
            return AtomMarks(rate, fam["points"], fam.get("weights"))
        if fam["type"] == "gaussian":
            return GaussianMarks(rate, fam["mean"], fam["var"])
        return UniformBoxMarks(rate, fam["low"], fam["high"])
    except ValueError as exc:
        raise ConfigError(str(exc), "noise.mark_family") from exc


def build_model(cfg: dict) -> SPDEModel:
    """Assemble generator, coefficients and jump measure from a validated config."""
    A = build_generator(cfg["model"])
    measure = build_measure(cfg["noise"])
    cc = cfg.get("coefficients", {"preset": "zero"})
    preset = cc.get("preset", "zero")
    N = A.n_modes
    try:
        if preset == "zero":
            coeffs = zero_coefficients(N)
        elif preset == "linear":
            coeffs = linear_coefficients(measure, N, cc.get("drift_scale", 0.0), cc.get("jump_scale", 1.0))
        elif preset == "additive":
            M = cc.get("mark_map", np.ones((N, measure.dim)).tolist())
            coeffs = additive_coefficients(measure, M, cc.get("drift_scale", 0.0))
            if coeffs.params["mark_map"] and np.shape(coeffs.params["mark_map"])[0] != N:
                raise ValueError(f"mark map needs {N} rows")
        else:
            coeffs = saturating_coefficients(measure, N, cc.get("scale", 1.0), cc.get("drift_scale", 0.0))
    except ValueError as exc:
        raise ConfigError(str(exc), "coefficients") from exc
    if "L_F" in cc:
        coeffs.lip_drift = float(cc["L_F"])
    if "L_f" in cc:
        coeffs.lip_jump = float(cc["L_f"])
    return SPDEModel(A, coeffs, measure)
