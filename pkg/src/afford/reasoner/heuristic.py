"""Rule tables behind the offline heuristic provider.

Three affordance kinds are covered: containers (ball agents poured from
above must be retained inside), support surfaces (a ball grid lowered onto
the top must rest on it) and seats (a hip-and-torso agent lowered onto the
seat must rest upright against the object).
"""

from __future__ import annotations

import math

import numpy as np

from afford.errors import ProviderError

CONTAINER, SUPPORT, SEAT = "container", "support", "seat"

# name -> (kind, min, max) of the largest bounding-box dimension in metres,
# bounds inclusive; order matters when picking a substitute
DIMENSION_RULES: dict[str, tuple[str, float, float]] = {
    "cup": (CONTAINER, 0.03, 0.3),
    "mug": (CONTAINER, 0.05, 0.2),
    "bowl": (CONTAINER, 0.05, 0.4),
    "vase": (CONTAINER, 0.05, 0.6),
    "bucket": (CONTAINER, 0.15, 0.6),
    "basket": (CONTAINER, 0.1, 1.0),
    "bathtub": (CONTAINER, 1.0, 2.5),
    "table": (SUPPORT, 0.3, 3.0),
    "shelf": (SUPPORT, 0.3, 3.0),
    "desk": (SUPPORT, 0.5, 3.0),
    "chair": (SEAT, 0.4, 1.5),
    "stool": (SEAT, 0.3, 1.0),
    "bench": (SEAT, 0.5, 3.0),
    "sofa": (SEAT, 0.8, 3.0),
}

ANALYSIS_TEXT = {
    CONTAINER: {
        "ibd": "Containability: the object retains small items poured into it, keeping them inside its cavity.",
        "agent_description": "small rigid balls sized to the opening",
        "interaction_description": "pour the balls from above the opening and let them drop into the object",
        "expected_outcome": "the balls rest inside the object, touching it and not the ground",
    },
    SUPPORT: {
        "ibd": "Supportability: the object offers a level top surface on which items can be placed and stay.",
        "agent_description": "a planar grid of rigid balls",
        "interaction_description": "lower the ball grid onto the top surface and release it",
        "expected_outcome": "the balls rest on the object at a consistent height without reaching the ground",
    },
    SEAT: {
        "ibd": "Sittability: a person can sit on the object with the hips supported and the back leaning on a backrest.",
        "agent_description": "a two-sphere figure with a hip sphere and a torso sphere above it",
        "interaction_description": "lower the figure onto the seat region, leaning slightly backwards, and release it",
        "expected_outcome": "the figure rests upright on the object, held by the seat and a backrest, off the ground",
    },
}

SEAT_HIP_RADIUS = 0.08
SEAT_TORSO_HEIGHT = 0.2
SEAT_MASS = 2.0
SEAT_REFERENCE_SIZE = 0.8
SEAT_LEAN_DEG = 15.0
SEAT_BACK_SHIFT = 0.2  # hip placement toward the lean side, fraction of the half extent
AGENT_SPEED = 0.5
CONTAINER_CLEARANCE = 1.5  # drop clearance above the top, times the largest dimension


def kind_of(affordance: str) -> str:
    rule = DIMENSION_RULES.get(affordance.strip().lower())
    if rule is None:
        raise ProviderError(f"the heuristic provider has no rule for affordance {affordance!r}")
    return rule[0]


def dimension_check(affordance: str, obb_dims) -> tuple[bool, str | None]:
    """``(match, alternative)`` from the rule table."""
    name = affordance.strip().lower()
    kind, lo, hi = DIMENSION_RULES.get(name, (None, 0.0, math.inf))
    if kind is None:
        raise ProviderError(f"the heuristic provider has no rule for affordance {affordance!r}")
    size = float(max(obb_dims))
    if lo <= size <= hi:
        return True, None
    for other, (k, a, b) in DIMENSION_RULES.items():
        if k == kind and other != name and a <= size <= b:
            return False, other
    return False, None


def _analysis(ctx: dict) -> dict:
    name = ctx["affordance"].strip().lower()
    match, alt = dimension_check(name, ctx["obb_dims"])
    doc = {"affordance": name, "dimension_match": match, "alternative_affordance": alt}
    doc.update(ANALYSIS_TEXT[kind_of(name)])
    return doc


def container_ball_radius(obb_dims) -> float:
    return float(np.clip(np.median(obb_dims) / 8.0, 0.005, 0.05))


def support_ball_radius(obb_dims) -> float:
    return float(np.clip(np.median(obb_dims) / 16.0, 0.005, 0.05))


def _ball_mass(r: float) -> float:
    # 10 g for a 1 cm ball, scaling with volume
    return 0.01 * (r / 0.01) ** 3


def seat_scale(obb_dims) -> float:
    return float(min(1.0, max(obb_dims) / SEAT_REFERENCE_SIZE))


def _agent(ctx: dict) -> dict:
    kind = kind_of(ctx["affordance"])
    dims = ctx["obb_dims"]
    if kind == SEAT:
        s = seat_scale(dims)
        r = SEAT_HIP_RADIUS * s
        return {
            "label": "hip_torso",
            "mass": SEAT_MASS * s**3,
            "spheres": [
                {"offset": [0.0, 0.0, 0.0], "radius": r},
                {"offset": [0.0, 0.0, SEAT_TORSO_HEIGHT * s], "radius": r},
            ],
        }
    r = container_ball_radius(dims) if kind == CONTAINER else support_ball_radius(dims)
    return {"label": "ball", "mass": _ball_mass(r), "spheres": [{"offset": [0.0, 0.0, 0.0], "radius": r}]}


def _distribution(ctx: dict) -> dict:
    kind = kind_of(ctx["affordance"])
    r = max(s["radius"] for s in ctx["agent"]["spheres"])
    if kind == CONTAINER:
        return {"pattern": "planar_grid", "counts": [2, 2, 1], "spacing": 2.5 * r}
    if kind == SUPPORT:
        return {"pattern": "planar_grid", "counts": [3, 3, 1], "spacing": max(float(np.median(ctx["obb_dims"])) / 4.0, 2.5 * r)}
    return {"pattern": "single", "counts": [1, 1, 1], "spacing": 0.0}


def _lean_quat(axis_dir: str) -> list[float]:
    # tilt the figure's z axis by the lean angle toward the given direction
    half = math.radians(SEAT_LEAN_DEG) / 2.0
    s, c = math.sin(half), math.cos(half)
    axis = {"+x": (0.0, 1.0, 0.0), "-x": (0.0, -1.0, 0.0), "+y": (-1.0, 0.0, 0.0), "-y": (1.0, 0.0, 0.0)}[axis_dir]
    return [c, axis[0] * s, axis[1] * s, axis[2] * s]


def _plans(ctx: dict) -> dict:
    kind = kind_of(ctx["affordance"])
    half = [float(x) for x in ctx["half_extents"]]
    height = 2.0 * half[2]
    radius = max(s["radius"] for s in ctx["agent"]["spheres"])
    down = [0.0, 0.0, -1.0]
    plans = []
    if kind == CONTAINER:
        travel = CONTAINER_CLEARANCE * 2.0 * max(half)
        for pid, (fx, label) in enumerate([(0.0, "above the centre"), (0.25, "above the centre offset +x/4"),
                                          (-0.25, "above the centre offset -x/4")]):
            plans.append({
                "plan_id": pid,
                "description": f"pour the balls from {label} of the opening",
                "start_region": {"anchor": "top", "offset_frac": [fx, 0.0, 0.0], "offset_m": [0.0, 0.0, 0.0]},
                "move_direction": down,
                "travel_distance": travel,
            })
    elif kind == SUPPORT:
        travel = 0.2 * height
        for pid, (fx, fy, label) in enumerate([(0.0, 0.0, "centre"), (0.25, 0.0, "+x/4"), (0.0, -0.25, "-y/4")]):
            plans.append({
                "plan_id": pid,
                "description": f"lower the ball grid onto the top surface at the {label} position from 1.2 times the height",
                "start_region": {"anchor": "top", "offset_frac": [fx, fy, 0.0], "offset_m": [0.0, 0.0, radius]},
                "move_direction": down,
                "travel_distance": travel,
            })
    else:
        travel = 1.2 * height + 0.1
        for pid, lean in enumerate(["-x", "+x", "-y", "+y"]):
            # sit toward the side the figure leans to, where a backrest would be
            sign = 1.0 if lean[0] == "+" else -1.0
            frac = [SEAT_BACK_SHIFT * sign, 0.0, 0.0] if lean[1] == "x" else [0.0, SEAT_BACK_SHIFT * sign, 0.0]
            plans.append({
                "plan_id": pid,
                "description": f"lower the figure straight down onto the seat, set back and leaning toward {lean}",
                "start_region": {"anchor": "bottom", "offset_frac": frac, "offset_m": [0.0, 0.0, radius]},
                "move_direction": down,
                "travel_distance": travel,
                "agent_orientation": _lean_quat(lean),
            })
    return {"plans": plans}


def _trajectories(ctx: dict) -> dict:
    from afford.errors import ProfileError
    from afford.profile import MotionPlan, resolve_plan

    half = np.asarray(ctx["half_extents"], dtype=float)
    speed = float(ctx.get("speed", AGENT_SPEED))
    out = []
    for p in ctx["plans"]:
        try:
            traj = resolve_plan(MotionPlan.from_dict(p), half, speed)
        except ProfileError:
            # unresolvable plans are left out; the caller reports the gap
            continue
        out.append(traj.to_dict())
    return {"trajectories": out}


SCORING_PROGRAMS = {
    CONTAINER: {"terms": [{"feature": "retained_fraction", "transform": "identity", "weight": 2.0}], "bias": -1.0},
    SUPPORT: {"terms": [{"feature": "retained_fraction", "transform": "identity", "weight": 2.0}], "bias": -1.5},
    SEAT: {
        "terms": [
            {"feature": "retained_fraction", "transform": "identity", "weight": 2.0},
            {"feature": "contact_object_mean", "transform": "threshold(2)", "weight": 1.0},
            {"feature": "tilt_deg_mean", "transform": "threshold(60)", "weight": -2.0},
        ],
        "bias": -2.0,
    },
}


def _scoring(ctx: dict) -> dict:
    import copy

    return copy.deepcopy(SCORING_PROGRAMS[kind_of(ctx["affordance"])])


# plausible hip height range for a seated figure, as fractions of the posed height
SEAT_HIP_BAND = (0.3, 0.85)
SEAT_MAX_TILT_DEG = 60.0


def _retained(agent: dict) -> bool:
    n_obj, _, n_ground = agent["contacts"]
    return n_obj >= 1 and n_ground == 0


def _validation(ctx: dict) -> dict:
    kind = kind_of(ctx["affordance"])
    half = np.asarray(ctx["half_extents"], dtype=float)
    height = 2.0 * half[2]
    r = float(ctx["agent_radius"])
    held = [a for a in ctx["agents"] if _retained(a)]
    if not held:
        return {"valid": False, "reason": "no agent is held by the object"}
    pts = np.array([a["rel_pos"] for a in held], dtype=float)
    if kind == CONTAINER:
        inside = (np.abs(pts[:, 0]) <= half[0]) & (np.abs(pts[:, 1]) <= half[1]) & (pts[:, 2] <= height - r)
        if not inside.all():
            return {"valid": False, "reason": "agents not contained"}
        return {"valid": True, "reason": "agents rest inside the cavity"}
    if kind == SUPPORT:
        if not (pts[:, 2] >= height + 0.5 * r).all():
            return {"valid": False, "reason": "agents not on top surface"}
        return {"valid": True, "reason": "agents rest on the top surface"}
    lo, hi = SEAT_HIP_BAND
    tilts = np.array([a["tilt_deg"] for a in held])
    ok = (pts[:, 2] >= lo * height) & (pts[:, 2] <= hi * height) & (tilts <= SEAT_MAX_TILT_DEG)
    if not ok.all():
        return {"valid": False, "reason": "agent not seated at plausible height"}
    return {"valid": True, "reason": "agent sits upright at seat height"}


_HANDLERS = {
    "affordance_analysis": _analysis,
    "agent_model": _agent,
    "agent_distribution": _distribution,
    "motion_plans": _plans,
    "trajectories": _trajectories,
    "scoring_program": _scoring,
    "pose_validation": _validation,
}


def respond(schema_id: str, context: dict) -> dict:
    try:
        handler = _HANDLERS[schema_id]
    except KeyError:
        raise ProviderError(f"no heuristic for schema {schema_id!r}") from None
    try:
        return handler(context)
    except KeyError as exc:
        raise ProviderError(f"context for {schema_id} lacks field {exc.args[0]!r}") from None
