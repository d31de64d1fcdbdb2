"""Run every (stable pose, plan) scenario and summarize where the agents end up."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from afford.errors import NumericBlowupError, ProfileError
from afford.geometry.mesh import TriMesh
from afford.geometry.obb import footprint_box
from afford.geometry.pose import Pose, quat_from_axis_angle
from afford.physics.config import WorldConfig
from afford.physics.world import KIND_NAMES, World
from afford.profile import AgentModel, ImaginationProfile, Trajectory
from afford.stable_pose import StablePose

log = logging.getLogger(__name__)

SETTLE_BUDGET = 3.0


@dataclass(frozen=True)
class ObjectFrame:
    """Box frame of the posed object: origin at the box bottom centre, z up."""

    pose: Pose  # world pose of the frame
    half_extents: np.ndarray

    @property
    def height(self) -> float:
        return 2.0 * float(self.half_extents[2])

    def to_dict(self) -> dict:
        return {"pose": self.pose.to_dict(), "half_extents": [float(x) for x in self.half_extents]}

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectFrame":
        return cls(Pose.from_dict(d["pose"]), np.asarray(d["half_extents"], dtype=float))


def object_frame(mesh: TriMesh, stable_pose: StablePose) -> ObjectFrame:
    """Footprint-aligned box frame of ``mesh`` resting in ``stable_pose``."""
    posed = mesh.transformed(stable_pose.pose)
    yaw, center, half = footprint_box(posed)
    origin = np.array([center[0], center[1], center[2] - half[2]])
    return ObjectFrame(Pose(quat_from_axis_angle([0.0, 0.0, 1.0], yaw), origin), half)


@dataclass(frozen=True)
class AgentOutcome:
    agent_index: int
    rel_pose: Pose  # agent frame relative to the object frame
    contacts: tuple[int, int, int]  # (object, agent, ground)
    tilt_deg: float  # rotation away from the spawn orientation

    def to_dict(self) -> dict:
        return {
            "agent_index": self.agent_index,
            "rel_pose": self.rel_pose.to_dict(),
            "contacts": list(self.contacts),
            "tilt_deg": self.tilt_deg,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AgentOutcome":
        return cls(int(d["agent_index"]), Pose.from_dict(d["rel_pose"]), tuple(int(c) for c in d["contacts"]),
                   float(d["tilt_deg"]))


@dataclass(frozen=True)
class ResultantConfiguration:
    pose_id: int
    plan_id: int
    agents: tuple[AgentOutcome, ...]
    released_early: bool
    settle_ok: bool
    release_step: int | None = None
    collision_with: tuple[str, ...] = ()
    frame: ObjectFrame | None = None
    agent_radius: float = 0.0
    description: str = ""
    trajectory: Trajectory | None = None

    def __post_init__(self) -> None:
        if any(min(a.contacts) < 0 for a in self.agents):
            raise ValueError("contact counts must be non-negative")

    @property
    def half_extents(self) -> np.ndarray:
        return self.frame.half_extents if self.frame is not None else np.zeros(3)

    def to_dict(self) -> dict:
        return {
            "pose_id": self.pose_id,
            "plan_id": self.plan_id,
            "agents": [a.to_dict() for a in self.agents],
            "released_early": self.released_early,
            "settle_ok": self.settle_ok,
            "release_step": self.release_step,
            "collision_with": list(self.collision_with),
            "frame": self.frame.to_dict() if self.frame is not None else None,
            "agent_radius": self.agent_radius,
            "description": self.description,
            "trajectory": self.trajectory.to_dict() if self.trajectory is not None else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "ResultantConfiguration":
        return cls(
            pose_id=int(d["pose_id"]),
            plan_id=int(d["plan_id"]),
            agents=tuple(AgentOutcome.from_dict(a) for a in d["agents"]),
            released_early=bool(d["released_early"]),
            settle_ok=bool(d["settle_ok"]),
            release_step=d.get("release_step"),
            collision_with=tuple(d.get("collision_with", ())),
            frame=ObjectFrame.from_dict(d["frame"]) if d.get("frame") else None,
            agent_radius=float(d.get("agent_radius", 0.0)),
            description=d.get("description", ""),
            trajectory=Trajectory.from_dict(d["trajectory"]) if d.get("trajectory") else None,
        )


def _agent_pose(group: Pose, frame: ObjectFrame, offset: np.ndarray) -> Pose:
    # grid offsets live in the object box axes and do not turn with the agents
    return Pose(group.rotation, group.position + frame.pose.rotate(offset))


def run_plan(
    mesh: TriMesh,
    stable_pose: StablePose,
    agent: AgentModel,
    offsets,
    trajectory: Trajectory,
    config: WorldConfig | None = None,
    pose_id: int = 0,
    settle_time: float = SETTLE_BUDGET,
    description: str = "",
    world_out: list | None = None,
) -> ResultantConfiguration:
    """Simulate one plan with the object fixed in ``stable_pose``.

    Agents spawn kinematic at the first via pose, the group moves through
    the via poses, and the agents are released (made dynamic) either on
    the first collision or after the last via pose; then the world settles.
    """
    if len(trajectory.via_poses) < 2:
        raise ProfileError("trajectory needs at least two via poses")
    offsets = np.asarray(offsets, dtype=float).reshape(-1, 3)
    world = World(config or WorldConfig())
    world.add_ground()
    world.add_static_mesh(mesh, stable_pose.pose)
    frame = object_frame(mesh, stable_pose)
    waypoints = [frame.pose @ p for p in trajectory.via_poses]
    spheres = [(o, r) for o, r in agent.spheres]
    ids = []
    spawn = []
    for o in offsets:
        p = _agent_pose(waypoints[0], frame, o)
        ids.append(world.add_sphere_composite(spheres, p, agent.mass, mode="kinematic"))
        spawn.append(p)

    move = world.move_kinematic(ids, waypoints, trajectory.speed)
    collision_with: tuple[str, ...] = ()
    if move.collided:
        slop = world.config.contact_slop
        touched = set()
        moving = set(ids)
        for c in world.contacts():
            if c.depth > slop and ((c.body_a in moving) != (c.body_b in moving)):
                other = c.body_b if c.body_a in moving else c.body_a
                touched.add(KIND_NAMES[int(world.kind[other])])
        collision_with = tuple(sorted(touched))
    for b in ids:
        world.set_mode(b, "dynamic")
        world.set_velocity(b)

    before = world.clone()
    try:
        settled, _ = world.settle(settle_time)
    except NumericBlowupError as exc:
        log.warning("pose %d plan %d blew up in body %d", pose_id, trajectory.plan_id, exc.body_id)
        world, settled = before, False
    if world_out is not None:
        world_out.append(world)

    inv = frame.pose.inverse()
    outcomes = []
    for k, (b, p0) in enumerate(zip(ids, spawn)):
        now = world.get_pose(b)
        outcomes.append(AgentOutcome(
            agent_index=k,
            rel_pose=inv @ now,
            contacts=world.contact_summary(b),
            tilt_deg=_tilt_deg(p0, now),
        ))
    return ResultantConfiguration(
        pose_id=pose_id,
        plan_id=trajectory.plan_id,
        agents=tuple(outcomes),
        released_early=move.collided,
        settle_ok=bool(settled),
        release_step=move.collision_step,
        collision_with=collision_with,
        frame=frame,
        agent_radius=agent.max_radius,
        description=description,
        trajectory=trajectory,
    )


def _tilt_deg(spawn: Pose, now: Pose) -> float:
    """Angle between the agent's z axis at spawn and now."""
    a = spawn.matrix[:, 2]
    b = now.matrix[:, 2]
    return float(np.degrees(np.arccos(np.clip(a @ b, -1.0, 1.0))))


def run_all(
    mesh: TriMesh,
    stable_poses: list[StablePose],
    profile: ImaginationProfile,
    config: WorldConfig | None = None,
    settle_time: float = SETTLE_BUDGET,
) -> dict[int, list[ResultantConfiguration]]:
    """Every (pose, plan) pair in its own world, grouped by pose id."""
    if not stable_poses:
        raise ProfileError("no stable pose to imagine")
    out: dict[int, list[ResultantConfiguration]] = {}
    offsets = profile.offsets
    for pose_id, sp in enumerate(stable_poses):
        trajs = sorted(profile.trajectories.get(pose_id, []), key=lambda t: t.plan_id)
        descriptions = {p.plan_id: p.description for p in profile.plans.get(pose_id, [])}
        out[pose_id] = [
            run_plan(mesh, sp, profile.agent, offsets, t, config, pose_id, settle_time, descriptions.get(t.plan_id, ""))
            for t in trajs
        ]
    if not any(out.values()):
        raise ProfileError("no plan to imagine")
    return out


__all__ = [
    "AgentOutcome",
    "ObjectFrame",
    "ResultantConfiguration",
    "object_frame",
    "run_all",
    "run_plan",
]
