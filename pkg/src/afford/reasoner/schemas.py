"""JSON schemas for every structured document the pipeline requests."""

from __future__ import annotations

import copy

import jsonschema

from afford.errors import InvalidInputError

SCHEMA_VERSION = 1

SCHEMA_IDS = (
    "affordance_analysis",
    "agent_model",
    "agent_distribution",
    "motion_plans",
    "trajectories",
    "scoring_program",
    "pose_validation",
)

FEATURES = (
    "rel_height_mean",
    "rel_horizontal_dist_mean",
    "inside_obb_fraction",
    "tilt_deg_mean",
    "contact_object_mean",
    "contact_agent_mean",
    "contact_ground_mean",
    "retained_fraction",
    "settled",
    "released_early",
)

ANCHORS = ("top", "bottom", "center", "face+x", "face-x", "face+y", "face-y")

_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_QUAT = {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4}
_TEXT = {"type": "string", "minLength": 1}
_POSE = {
    "type": "object",
    "properties": {"pos": _VEC3, "quat": _QUAT},
    "required": ["pos"],
}

SCHEMAS: dict[str, dict] = {
    "affordance_analysis": {
        "type": "object",
        "properties": {
            "affordance": _TEXT,
            "dimension_match": {"type": "boolean"},
            "alternative_affordance": {"type": ["string", "null"]},
            "ibd": _TEXT,
            "agent_description": _TEXT,
            "interaction_description": _TEXT,
            "expected_outcome": _TEXT,
        },
        "required": ["dimension_match", "ibd", "agent_description", "interaction_description", "expected_outcome"],
    },
    "agent_model": {
        "type": "object",
        "properties": {
            "label": _TEXT,
            "mass": {"type": "number", "exclusiveMinimum": 0},
            "spheres": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "type": "object",
                    "properties": {"offset": _VEC3, "radius": {"type": "number", "exclusiveMinimum": 0}},
                    "required": ["offset", "radius"],
                },
            },
        },
        "required": ["mass", "spheres"],
    },
    "agent_distribution": {
        "type": "object",
        "properties": {
            "pattern": {"enum": ["single", "planar_grid", "cube_grid"]},
            "counts": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 3, "maxItems": 3},
            "spacing": {"type": "number", "minimum": 0},
        },
        "required": ["pattern"],
    },
    "motion_plans": {
        "type": "object",
        "properties": {
            "plans": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "type": "object",
                    "properties": {
                        "plan_id": {"type": "integer", "minimum": 0},
                        "description": _TEXT,
                        "start_region": {
                            "type": "object",
                            "properties": {
                                "anchor": {"type": "string"},
                                "offset_frac": _VEC3,
                                "offset_m": _VEC3,
                            },
                            "required": ["anchor"],
                        },
                        "move_direction": _VEC3,
                        "travel_distance": {"type": "number", "exclusiveMinimum": 0},
                        "agent_orientation": _QUAT,
                    },
                    "required": ["plan_id", "description", "start_region", "move_direction", "travel_distance"],
                },
            }
        },
        "required": ["plans"],
    },
    "trajectories": {
        "type": "object",
        "properties": {
            "trajectories": {
                "type": "array",
                "items": {
                    "type": "object",
                    "properties": {
                        "plan_id": {"type": "integer", "minimum": 0},
                        "speed_mps": {"type": "number", "exclusiveMinimum": 0},
                        "via_poses": {"type": "array", "items": _POSE, "minItems": 2},
                    },
                    "required": ["plan_id", "via_poses"],
                },
            }
        },
        "required": ["trajectories"],
    },
    "scoring_program": {
        "type": "object",
        "properties": {
            "terms": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "type": "object",
                    "properties": {
                        "feature": {"type": "string"},
                        "transform": {"type": ["string", "object"]},
                        "weight": {"type": "number"},
                    },
                    "required": ["feature", "weight"],
                },
            },
            "bias": {"type": "number"},
        },
        "required": ["terms"],
    },
    "pose_validation": {
        "type": "object",
        "properties": {"valid": {"type": "boolean"}, "reason": {"type": "string"}},
        "required": ["valid"],
    },
}

# documented defaults for optional fields, applied after validation
_DEFAULTS = {
    "affordance_analysis": {"alternative_affordance": None},
    "agent_model": {"label": "agent"},
    "agent_distribution": {"counts": [1, 1, 1], "spacing": 0.0},
    "scoring_program": {"bias": 0.0},
    "pose_validation": {"reason": ""},
}
_PLAN_DEFAULTS = {"offset_frac": [0.0, 0.0, 0.0], "offset_m": [0.0, 0.0, 0.0]}
_TERM_DEFAULTS = {"transform": "identity"}
_TRAJ_DEFAULTS = {"speed_mps": 0.5}
_POSE_DEFAULTS = {"quat": [1.0, 0.0, 0.0, 0.0]}


def schema_for(schema_id: str) -> dict:
    if schema_id not in SCHEMAS:
        raise InvalidInputError(f"unknown schema_id {schema_id!r}")
    return SCHEMAS[schema_id]


def validation_errors(schema_id: str, doc) -> list[str]:
    """Human-readable schema violations, empty when ``doc`` is valid."""
    validator = jsonschema.Draft7Validator(schema_for(schema_id))
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    out = []
    for e in errors:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        out.append(f"{where}: {e.message}")
    return out


def fill_defaults(schema_id: str, doc: dict) -> dict:
    """Copy of a valid ``doc`` with missing optional fields filled in."""
    out = copy.deepcopy(doc)
    for k, v in _DEFAULTS.get(schema_id, {}).items():
        out.setdefault(k, copy.deepcopy(v))
    if schema_id == "motion_plans":
        for plan in out["plans"]:
            for k, v in _PLAN_DEFAULTS.items():
                plan["start_region"].setdefault(k, list(v))
    elif schema_id == "scoring_program":
        for term in out["terms"]:
            for k, v in _TERM_DEFAULTS.items():
                term.setdefault(k, v)
    elif schema_id == "trajectories":
        for traj in out["trajectories"]:
            for k, v in _TRAJ_DEFAULTS.items():
                traj.setdefault(k, v)
            for pose in traj["via_poses"]:
                pose.setdefault("quat", list(_POSE_DEFAULTS["quat"]))
    return out
