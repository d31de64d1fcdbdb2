"""End-to-end classification of one object for one affordance."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from afford.analysis import AffordanceAnalysis, TaskDescription, analyze
from afford.errors import EmptyProfileError, ProfileError
from afford.geometry.mesh import TriMesh
from afford.geometry.obb import compute_obb
from afford.imagination import ResultantConfiguration, object_frame, run_all
from afford.physics.config import WorldConfig
from afford.profile import (
    DEFAULT_SPEED,
    ImaginationProfile,
    generate_agent_model,
    generate_distribution,
    generate_trajectories,
    plan_motions,
)
from afford.reasoner.core import Provider, make_request
from afford.reasoner.schemas import FEATURES
from afford.scoring import AffordanceVerdict, ScoringProgram, decide, parse_scoring_program
from afford.stable_pose import StablePose, find_stable_poses

log = logging.getLogger(__name__)


@dataclass
class Classification:
    """Everything one run produced; ``ablated`` is the verdict without pose validation."""

    task: TaskDescription
    analysis: AffordanceAnalysis
    stable_poses: list[StablePose]
    profile: ImaginationProfile
    results: dict[int, list[ResultantConfiguration]]
    program: ScoringProgram
    verdict: AffordanceVerdict
    ablated: AffordanceVerdict | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "affordance": self.task.affordance_name,
            "obb_dims": [float(x) for x in self.task.obb_dims],
            "analysis": self.analysis.to_dict(),
            "stable_poses": [sp.to_dict() for sp in self.stable_poses],
            "scoring_program": self.program.to_dict(),
            "verdict": self.verdict.to_dict(),
            "ablated": self.ablated.to_dict() if self.ablated is not None else None,
            "notes": list(self.notes),
        }


def describe_task(mesh: TriMesh, affordance: str) -> TaskDescription:
    obb = compute_obb(mesh)
    return TaskDescription(affordance, tuple(float(x) for x in obb.dims), tuple(float(x) for x in obb.frame.position))


def build_profile(
    task: TaskDescription,
    analysis: AffordanceAnalysis,
    mesh: TriMesh,
    stable_poses: list[StablePose],
    provider: Provider,
    speed: float = DEFAULT_SPEED,
    notes: list[str] | None = None,
) -> ImaginationProfile:
    """Agent, layout, and per-pose plans and trajectories.

    A pose whose plans all fail is skipped; an empty profile is an error.
    """
    agent = generate_agent_model(task, analysis, provider)
    dist, _ = generate_distribution(task, analysis, agent, provider)
    profile = ImaginationProfile(agent, dist)
    for pose_id, sp in enumerate(stable_poses):
        frame = object_frame(mesh, sp)
        try:
            plans = plan_motions(task, analysis, pose_id, sp.body_frame_up, frame.half_extents, agent, provider)
            trajs = generate_trajectories(plans, frame.half_extents, provider, speed)
        except EmptyProfileError as exc:
            log.warning("pose %d has no usable plan: %s", pose_id, exc)
            if notes is not None:
                notes.append(f"pose {pose_id} skipped: {exc}")
            continue
        profile.plans[pose_id] = plans
        profile.trajectories[pose_id] = trajs
    if not profile.trajectories:
        raise ProfileError("no pose has a usable plan")
    return profile


def scoring_program(task: TaskDescription, analysis: AffordanceAnalysis, provider: Provider) -> ScoringProgram:
    ctx = task.context(analysis.effective_affordance)
    ctx["expected_outcome"] = analysis.expected_outcome
    return parse_scoring_program(provider.complete(make_request("scoring_program", ctx, features=", ".join(FEATURES))))


def classify(
    mesh: TriMesh,
    affordance: str,
    provider: Provider,
    config: WorldConfig | None = None,
    seed: int = 0,
    n_orientations: int = 64,
    validate: bool = True,
    with_ablation: bool = False,
    stable_poses: list[StablePose] | None = None,
    speed: float = DEFAULT_SPEED,
) -> Classification:
    """Run the whole pipeline.

    With ``with_ablation`` the same imagination results are also judged
    without pose validation, so the two verdicts differ only in that step.
    """
    config = config or WorldConfig()
    task = describe_task(mesh, affordance)
    analysis = analyze(task, provider)
    if stable_poses is None:
        stable_poses = find_stable_poses(mesh, n_orientations=n_orientations, seed=seed, config=config)
    notes: list[str] = []
    profile = build_profile(task, analysis, mesh, stable_poses, provider, speed, notes)
    results = run_all(mesh, stable_poses, profile, config)
    program = scoring_program(task, analysis, provider)
    verdict = decide(results, program, analysis, stable_poses, provider, validate=validate)
    ablated = None
    if with_ablation:
        ablated = verdict if not validate else decide(results, program, analysis, stable_poses, validate=False)
    return Classification(task, analysis, stable_poses, profile, results, program, verdict, ablated, notes)


def up_matches(stable_pose: StablePose, ups, tol_deg: float = 15.0) -> bool:
    """Whether the pose's body-frame up is within ``tol_deg`` of any of ``ups``."""
    u = np.asarray(stable_pose.body_frame_up, dtype=float)
    for v in ups:
        v = np.asarray(v, dtype=float)
        if np.degrees(np.arccos(np.clip(u @ v / np.linalg.norm(v), -1.0, 1.0))) <= tol_deg:
            return True
    return False


__all__ = ["Classification", "build_profile", "classify", "describe_task", "scoring_program", "up_matches"]
