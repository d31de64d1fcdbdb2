"""Imagination profiles: agent model, agent layout, motion plans, trajectories."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from afford.analysis import AffordanceAnalysis, TaskDescription
from afford.errors import EmptyProfileError, InvalidInputError, MalformedOutputError, ProfileError
from afford.geometry.pose import Pose
from afford.reasoner.core import Provider, make_request
from afford.reasoner.schemas import ANCHORS

log = logging.getLogger(__name__)

DEFAULT_SPEED = 0.5


@dataclass(frozen=True)
class AgentModel:
    spheres: tuple  # ((offset ndarray, radius), ...)
    mass: float
    label: str = "agent"

    def __post_init__(self) -> None:
        spheres = tuple((np.asarray(o, dtype=float).reshape(3), float(r)) for o, r in self.spheres)
        if not spheres:
            raise ProfileError("agent needs at least one sphere")
        if any(not r > 0 for _, r in spheres):
            raise ProfileError("agent sphere radii must be positive")
        if not self.mass > 0:
            raise ProfileError("agent mass must be positive")
        if not all(np.all(np.isfinite(o)) for o, _ in spheres):
            raise ProfileError("agent sphere offsets must be finite")
        object.__setattr__(self, "spheres", spheres)

    @property
    def max_radius(self) -> float:
        return max(r for _, r in self.spheres)

    def bounding_diameter(self) -> float:
        best = 0.0
        for oa, ra in self.spheres:
            for ob, rb in self.spheres:
                best = max(best, float(np.linalg.norm(oa - ob)) + ra + rb)
        return best

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "mass": self.mass,
            "spheres": [{"offset": [float(x) for x in o], "radius": r} for o, r in self.spheres],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AgentModel":
        return cls(tuple((s["offset"], s["radius"]) for s in d["spheres"]), float(d["mass"]), d.get("label", "agent"))


@dataclass(frozen=True)
class AgentDistribution:
    pattern: str
    counts: tuple[int, int, int] = (1, 1, 1)
    spacing: float = 0.0

    def __post_init__(self) -> None:
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        if self.pattern not in ("single", "planar_grid", "cube_grid"):
            raise ProfileError(f"unknown distribution pattern {self.pattern!r}")
        if len(counts) != 3 or min(counts) < 1:
            raise ProfileError("counts must be three positive integers")
        if self.pattern == "single" and counts != (1, 1, 1):
            raise ProfileError("a single distribution has counts (1, 1, 1)")
        if self.pattern == "planar_grid" and counts[2] != 1:
            raise ProfileError("a planar grid has one layer in z")
        if self.spacing < 0 or not np.isfinite(self.spacing):
            raise ProfileError("spacing must be a non-negative number")

    @property
    def n_agents(self) -> int:
        return int(np.prod(self.counts))

    def offsets(self) -> np.ndarray:
        """Agent centres relative to the distribution centre (x fastest)."""
        axes = [(np.arange(n) - (n - 1) / 2.0) * self.spacing for n in self.counts]
        zz, yy, xx = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
        return np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)

    def check_spacing(self, agent: AgentModel) -> None:
        if self.n_agents > 1 and self.spacing < 2.0 * agent.max_radius - 1e-12:
            raise ProfileError(
                f"spacing {self.spacing:.4g} m lets agents of radius {agent.max_radius:.4g} m overlap"
            )

    def to_dict(self) -> dict:
        return {"pattern": self.pattern, "counts": list(self.counts), "spacing": self.spacing}

    @classmethod
    def from_dict(cls, d: dict) -> "AgentDistribution":
        return cls(d["pattern"], tuple(d.get("counts", (1, 1, 1))), float(d.get("spacing", 0.0)))


def _unit(v, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(3)
    n = np.linalg.norm(v)
    if not np.isfinite(n) or n < 1e-12:
        raise ProfileError(f"{what} must be a non-zero vector")
    return v / n


@dataclass(frozen=True)
class MotionPlan:
    plan_id: int
    description: str
    start_region: dict
    move_direction: np.ndarray
    travel_distance: float
    agent_orientation: np.ndarray | None = None

    def __post_init__(self) -> None:
        d = np.asarray(self.move_direction, dtype=float).reshape(3)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ProfileError("move_direction must be a unit vector")
        object.__setattr__(self, "move_direction", d)
        if not self.travel_distance > 0:
            raise ProfileError("travel_distance must be positive")
        region = dict(self.start_region)
        region.setdefault("offset_frac", [0.0, 0.0, 0.0])
        region.setdefault("offset_m", [0.0, 0.0, 0.0])
        object.__setattr__(self, "start_region", region)
        if self.agent_orientation is not None:
            q = np.asarray(self.agent_orientation, dtype=float).reshape(4)
            object.__setattr__(self, "agent_orientation", q / np.linalg.norm(q))

    def to_dict(self) -> dict:
        d = {
            "plan_id": self.plan_id,
            "description": self.description,
            "start_region": {
                "anchor": self.start_region["anchor"],
                "offset_frac": [float(x) for x in self.start_region["offset_frac"]],
                "offset_m": [float(x) for x in self.start_region["offset_m"]],
            },
            "move_direction": [float(x) for x in self.move_direction],
            "travel_distance": float(self.travel_distance),
        }
        if self.agent_orientation is not None:
            d["agent_orientation"] = [float(x) for x in self.agent_orientation]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MotionPlan":
        """Parse a plan document; a non-unit direction is normalized."""
        return cls(
            int(d["plan_id"]),
            d["description"],
            dict(d["start_region"]),
            _unit(d["move_direction"], "move_direction"),
            float(d["travel_distance"]),
            d.get("agent_orientation"),
        )


@dataclass(frozen=True)
class Trajectory:
    plan_id: int
    via_poses: tuple
    speed: float = DEFAULT_SPEED

    def __post_init__(self) -> None:
        poses = tuple(p if isinstance(p, Pose) else Pose.from_dict(p) for p in self.via_poses)
        if len(poses) < 2:
            raise ProfileError("a trajectory needs at least two via poses")
        for a, b in zip(poses[:-1], poses[1:]):
            if a.allclose(b, atol=1e-12):
                raise ProfileError("consecutive via poses must differ")
        if not self.speed > 0:
            raise ProfileError("trajectory speed must be positive")
        object.__setattr__(self, "via_poses", poses)

    def to_dict(self) -> dict:
        return {"plan_id": self.plan_id, "speed_mps": self.speed, "via_poses": [p.to_dict() for p in self.via_poses]}

    @classmethod
    def from_dict(cls, d: dict) -> "Trajectory":
        return cls(int(d["plan_id"]), tuple(Pose.from_dict(p) for p in d["via_poses"]), float(d.get("speed_mps", DEFAULT_SPEED)))


def anchor_point(anchor: str, half_extents) -> np.ndarray:
    """Anchor on the posed box, whose bottom centre is the object-frame origin."""
    hx, hy, hz = (float(x) for x in half_extents)
    table = {
        "top": (0.0, 0.0, 2 * hz),
        "bottom": (0.0, 0.0, 0.0),
        "center": (0.0, 0.0, hz),
        "face+x": (hx, 0.0, hz),
        "face-x": (-hx, 0.0, hz),
        "face+y": (0.0, hy, hz),
        "face-y": (0.0, -hy, hz),
    }
    if anchor not in table:
        raise ProfileError(f"unknown anchor {anchor!r}; expected one of {ANCHORS}")
    return np.array(table[anchor])


def resolve_plan(plan: MotionPlan, half_extents, speed: float = DEFAULT_SPEED) -> Trajectory:
    """Numeric via poses for a symbolic plan.

    The motion ends at anchor + offset_frac * half_extents + offset_m and
    starts ``travel_distance`` before that along ``move_direction``.
    """
    half = np.asarray(half_extents, dtype=float)
    region = plan.start_region
    end = (anchor_point(region["anchor"], half) + np.asarray(region["offset_frac"], dtype=float) * half
           + np.asarray(region["offset_m"], dtype=float))
    start = end - plan.move_direction * plan.travel_distance
    q = plan.agent_orientation if plan.agent_orientation is not None else np.array([1.0, 0.0, 0.0, 0.0])
    return Trajectory(plan.plan_id, (Pose(q, start), Pose(q, end)), speed)


# generation ------------------------------------------------------------------


def _request(provider: Provider, schema_id: str, context: dict) -> dict:
    return provider.complete(make_request(schema_id, context))


def generate_agent_model(task: TaskDescription, analysis: AffordanceAnalysis, provider: Provider) -> AgentModel:
    """Agent sized against the object; one regeneration on a scale violation."""
    limit = 2.0 * max(task.obb_dims)
    ctx = task.context(analysis.effective_affordance)
    ctx["agent_description"] = analysis.agent_description
    problem = ""
    for attempt in range(2):
        if attempt:
            ctx = dict(ctx, feedback=problem)
        doc = _request(provider, "agent_model", ctx)
        try:
            agent = AgentModel.from_dict(doc)
        except ProfileError as exc:
            problem = str(exc)
            continue
        if agent.bounding_diameter() <= limit + 1e-12:
            return agent
        problem = f"agent diameter {agent.bounding_diameter():.4g} m exceeds twice the largest object dimension ({limit:.4g} m)"
    raise ProfileError(f"agent model rejected twice: {problem}")


def generate_distribution(task: TaskDescription, analysis: AffordanceAnalysis, agent: AgentModel,
                          provider: Provider) -> tuple[AgentDistribution, np.ndarray]:
    ctx = task.context(analysis.effective_affordance)
    ctx["agent"] = agent.to_dict()
    problem = ""
    for attempt in range(2):
        if attempt:
            ctx = dict(ctx, feedback=problem)
        doc = _request(provider, "agent_distribution", ctx)
        try:
            dist = AgentDistribution.from_dict(doc)
            dist.check_spacing(agent)
        except ProfileError as exc:
            problem = str(exc)
            continue
        return dist, dist.offsets()
    raise ProfileError(f"agent distribution rejected twice: {problem}")


def plan_motions(task: TaskDescription, analysis: AffordanceAnalysis, pose_id: int, body_frame_up,
                 half_extents, agent: AgentModel, provider: Provider) -> list[MotionPlan]:
    ctx = task.context(analysis.effective_affordance)
    ctx.update({
        "interaction_description": analysis.interaction_description,
        "pose_id": int(pose_id),
        "body_frame_up": [round(float(x), 9) for x in body_frame_up],
        "half_extents": [round(float(x), 9) for x in half_extents],
        "agent": agent.to_dict(),
    })
    doc = _request(provider, "motion_plans", ctx)
    plans = []
    for p in doc["plans"]:
        try:
            plans.append(MotionPlan.from_dict(p))
        except ProfileError as exc:
            log.warning("dropping motion plan %s: %s", p.get("plan_id"), exc)
    if not plans:
        raise EmptyProfileError("no usable motion plan")
    return plans


def generate_trajectories(plans: list[MotionPlan], half_extents, provider: Provider,
                          speed: float = DEFAULT_SPEED) -> list[Trajectory]:
    ctx = {
        "plans": [p.to_dict() for p in plans],
        "half_extents": [round(float(x), 9) for x in half_extents],
        "speed": speed,
    }
    try:
        doc = _request(provider, "trajectories", ctx)
        entries = doc["trajectories"]
    except MalformedOutputError as exc:
        log.warning("trajectory request failed (%s); resolving plans locally", exc)
        entries = []
    known = {p.plan_id for p in plans}
    out = []
    for d in entries:
        try:
            t = Trajectory.from_dict(d)
        except (ProfileError, InvalidInputError) as exc:
            log.warning("dropping trajectory for plan %s: %s", d.get("plan_id"), exc)
            continue
        if t.plan_id in known:
            out.append(t)
    if not out:
        raise EmptyProfileError("every motion plan was dropped")
    return sorted(out, key=lambda t: t.plan_id)


@dataclass
class ImaginationProfile:
    agent: AgentModel
    distribution: AgentDistribution
    plans: dict[int, list[MotionPlan]] = field(default_factory=dict)  # by pose id
    trajectories: dict[int, list[Trajectory]] = field(default_factory=dict)

    @property
    def offsets(self) -> np.ndarray:
        return self.distribution.offsets()

    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        _dump(d / "agent.json", self.agent.to_dict())
        _dump(d / "distribution.json", dict(self.distribution.to_dict(), offsets=self.offsets.tolist()))
        _dump(d / "plans.json", {"poses": [
            {"pose_id": k, "plans": [p.to_dict() for p in v]} for k, v in sorted(self.plans.items())
        ]})
        _dump(d / "trajectories.json", {"poses": [
            {"pose_id": k, "trajectories": [t.to_dict() for t in v]} for k, v in sorted(self.trajectories.items())
        ]})
        return d

    @classmethod
    def load(cls, directory) -> "ImaginationProfile":
        d = Path(directory)
        agent = AgentModel.from_dict(json.loads((d / "agent.json").read_text()))
        dist = AgentDistribution.from_dict(json.loads((d / "distribution.json").read_text()))
        plans = {e["pose_id"]: [MotionPlan.from_dict(p) for p in e["plans"]]
                 for e in json.loads((d / "plans.json").read_text())["poses"]}
        trajs = {e["pose_id"]: [Trajectory.from_dict(t) for t in e["trajectories"]]
                 for e in json.loads((d / "trajectories.json").read_text())["poses"]}
        return cls(agent, dist, plans, trajs)


def _dump(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
