"""JSON study configuration: schema validation and Study construction."""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema
import numpy as np

from .assembly import ProblemConfig
from .errors import ConfigError
from .mesh import generate_structured, load_mesh
from .pipeline import Study

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["mesh", "geometry", "sampling"],
    "additionalProperties": False,
    "properties": {
        "mesh": {
            "oneOf": [
                {
                    "type": "object",
                    "required": ["kind", "rect", "nx", "ny"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"const": "structured"},
                        "rect": {
                            "type": "array",
                            "items": {"type": "number"},
                            "minItems": 4,
                            "maxItems": 4,
                        },
                        "nx": {"type": "integer", "minimum": 1},
                        "ny": {"type": "integer", "minimum": 1},
                    },
                },
                {
                    "type": "object",
                    "required": ["kind", "path"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"const": "file"},
                        "path": {"type": "string"},
                    },
                },
            ]
        },
        "geometry": {
            "type": "object",
            "required": ["kind", "parameter_box"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["circle", "ffd_composite"]},
                "radius": {"type": "number", "exclusiveMinimum": 0},
                "parameter_box": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "array",
                        "items": {"type": "number"},
                        "minItems": 2,
                        "maxItems": 2,
                    },
                },
            },
        },
        "physics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "nu": {"type": "number", "exclusiveMinimum": 0},
                "body_force": {"type": "array", "items": {"type": "number"}},
                "inlet_velocity": {"type": "array", "items": {"type": "number"}},
                "outflow_traction": {"type": "array", "items": {"type": "number"}},
                "embedded_value": {"type": "array", "items": {"type": "number"}},
                "nitsche_alpha": {"type": "number", "exclusiveMinimum": 0},
                "nitsche_beta": {"type": "number", "minimum": 0},
                "stab_delta": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "sampling": {
            "type": "object",
            "required": ["count"],
            "additionalProperties": False,
            "properties": {
                "count": {"type": "integer", "minimum": 1},
                "strategy": {"enum": ["equispaced", "random"]},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "modes": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "schedule": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 1},
                },
                "velocity_ratio": {"type": "integer", "minimum": 1},
                "pressure_ratio": {"type": "integer", "minimum": 1},
                "supremizer_ratio": {"type": "integer", "minimum": 0},
            },
        },
        "supremizers": {"type": "boolean"},
        "test_samples": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "count": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "edge_quadrature": {"type": "integer", "minimum": 1, "maximum": 4},
        "timing_repeats": {"type": "integer", "minimum": 1},
        "output_dir": {"type": "string"},
    },
}


def load_raw_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"{path}: schema violation at {list(exc.path)}: {exc.message}") from exc
    mesh_spec = raw["mesh"]
    if mesh_spec["kind"] == "file":
        mesh_path = (path.parent / mesh_spec["path"]).resolve()
        if not mesh_path.exists():
            raise ConfigError(f"{path}: mesh file {mesh_path} does not exist")
        mesh_spec["path"] = str(mesh_path)
    return raw


def offline_payload(raw: dict) -> dict:
    """The config subset that offline artifacts are keyed on."""
    return {
        "mesh": raw["mesh"],
        "geometry": raw["geometry"],
        "physics": raw.get("physics", {}),
        "sampling": raw.get("sampling", {}),
        "supremizers": raw.get("supremizers", True),
        "edge_quadrature": raw.get("edge_quadrature", 2),
    }


def build_study(raw: dict, seed=None, output_dir=None) -> Study:
    mesh_spec = raw["mesh"]
    if mesh_spec["kind"] == "structured":
        mesh = generate_structured(
            tuple(mesh_spec["rect"]), mesh_spec["nx"], mesh_spec["ny"]
        )
    else:
        mesh = load_mesh(mesh_spec["path"])
    phys = raw.get("physics", {})
    physics = ProblemConfig(
        nu=phys.get("nu", 1.0),
        body_force=tuple(phys.get("body_force", (0.0, 0.0))),
        inlet_velocity=tuple(phys.get("inlet_velocity", (1.0, 0.0))),
        outflow_traction=tuple(phys.get("outflow_traction", (0.0, 0.0))),
        embedded_value=tuple(phys.get("embedded_value", (0.0, 0.0))),
        nitsche_alpha=phys.get("nitsche_alpha", 10.0),
        nitsche_beta=phys.get("nitsche_beta", 1.0),
        stab_delta=phys.get("stab_delta", 0.1),
    )
    geom = raw["geometry"]
    sampling = raw["sampling"]
    modes = raw.get("modes", {})
    tests = raw.get("test_samples", {})
    return Study(
        mesh=mesh,
        physics=physics,
        geometry_kind=geom["kind"],
        radius=geom.get("radius", 0.2),
        parameter_box=np.asarray(geom["parameter_box"], dtype=np.float64),
        sample_count=sampling["count"],
        sample_strategy=sampling.get("strategy", "equispaced"),
        sample_seed=seed if seed is not None else sampling.get("seed", 0),
        mode_schedule=tuple(modes.get("schedule", (8, 16, 32, 48))),
        velocity_ratio=modes.get("velocity_ratio", 1),
        pressure_ratio=modes.get("pressure_ratio", 6),
        supremizer_ratio=modes.get("supremizer_ratio", 4),
        use_supremizers=raw.get("supremizers", True),
        test_count=tests.get("count", 10),
        test_seed=tests.get("seed", 7),
        edge_quad_order=raw.get("edge_quadrature", 2),
        timing_repeats=raw.get("timing_repeats", 3),
        output_dir=output_dir if output_dir is not None else raw.get("output_dir"),
    )


def load_config(path, seed=None, output_dir=None):
    raw = load_raw_config(path)
    return build_study(raw, seed=seed, output_dir=output_dir), raw
