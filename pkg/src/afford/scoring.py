"""Scoring programs over resultant configurations, validation, and the verdict.

A scoring program is data, not code: a bias plus weighted terms, each
applying one of four transforms to one of a closed set of features.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from afford.analysis import AffordanceAnalysis
from afford.errors import ProviderError, ScoringParseError
from afford.imagination import ResultantConfiguration
from afford.reasoner.core import Provider, make_request
from afford.reasoner.schemas import FEATURES
from afford.stable_pose import StablePose

TRANSFORMS = ("identity", "negate", "threshold", "band")


@dataclass(frozen=True)
class Transform:
    kind: str
    params: tuple[float, ...] = ()

    def __call__(self, x: float) -> float:
        if self.kind == "identity":
            return x
        if self.kind == "negate":
            return -x
        if self.kind == "threshold":
            return 1.0 if x >= self.params[0] else 0.0
        lo, hi = self.params
        return 1.0 if lo <= x <= hi else 0.0

    def to_json(self) -> str:
        if not self.params:
            return self.kind
        return f"{self.kind}({', '.join(repr(p) for p in self.params)})"


@dataclass(frozen=True)
class Term:
    feature: str
    transform: Transform
    weight: float


@dataclass(frozen=True)
class ScoringProgram:
    terms: tuple[Term, ...]
    bias: float = 0.0

    def to_dict(self) -> dict:
        return {
            "terms": [{"feature": t.feature, "transform": t.transform.to_json(), "weight": t.weight} for t in self.terms],
            "bias": self.bias,
        }


_CALL = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")


def _number(text, where: str) -> float:
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise ScoringParseError(f"expected a number, got {text!r}", location=where) from None
    if not math.isfinite(v):
        raise ScoringParseError("numbers must be finite", location=where)
    return v


def _parse_transform(spec, where: str) -> Transform:
    if isinstance(spec, dict):
        kind = spec.get("kind", spec.get("name"))
        if kind == "threshold":
            params = (spec.get("t", spec.get("threshold")),)
        elif kind == "band":
            params = (spec.get("lo"), spec.get("hi"))
        else:
            params = ()
        raw_params = [p for p in params]
    elif isinstance(spec, str):
        m = _CALL.match(spec)
        if not m:
            raise ScoringParseError(f"cannot read transform {spec!r}", location=where)
        kind = m.group(1)
        raw_params = [p.strip() for p in m.group(2).split(",")] if m.group(2) is not None else []
        if raw_params == [""]:
            raw_params = []
    else:
        raise ScoringParseError("transform must be a string or an object", location=where)
    if kind not in TRANSFORMS:
        raise ScoringParseError(f"unknown transform {kind!r}", location=where)
    arity = {"identity": 0, "negate": 0, "threshold": 1, "band": 2}[kind]
    if len(raw_params) != arity:
        raise ScoringParseError(f"{kind} takes {arity} parameter(s), got {len(raw_params)}", location=where)
    params = tuple(_number(p, where) for p in raw_params)
    if kind == "band" and params[0] > params[1]:
        raise ScoringParseError("band needs lo <= hi", location=where)
    return Transform(kind, params)


def parse_scoring_program(document: dict) -> ScoringProgram:
    """Validate a provider-emitted program; unknown features are rejected."""
    if not isinstance(document, dict):
        raise ScoringParseError("program must be an object", location="<root>")
    terms_doc = document.get("terms")
    if not isinstance(terms_doc, list) or not terms_doc:
        raise ScoringParseError("program needs at least one term", location="terms")
    terms = []
    for i, t in enumerate(terms_doc):
        where = f"terms[{i}]"
        if not isinstance(t, dict):
            raise ScoringParseError("term must be an object", location=where)
        feature = t.get("feature")
        if feature not in FEATURES:
            raise ScoringParseError(f"unknown feature {feature!r}", location=f"{where}.feature")
        transform = _parse_transform(t.get("transform", "identity"), f"{where}.transform")
        weight = _number(t.get("weight"), f"{where}.weight")
        terms.append(Term(feature, transform, weight))
    bias = _number(document.get("bias", 0.0), "bias")
    return ScoringProgram(tuple(terms), bias)


def _retained(contacts) -> bool:
    return contacts[0] >= 1 and contacts[2] == 0


def compute_features(r: ResultantConfiguration) -> dict[str, float]:
    """Feature values of one configuration; means over agents."""
    n = len(r.agents)
    out = {f: 0.0 for f in FEATURES}
    out["settled"] = 1.0 if r.settle_ok else 0.0
    out["released_early"] = 1.0 if r.released_early else 0.0
    if n == 0:
        return out
    pos = np.array([a.rel_pose.position for a in r.agents])
    contacts = np.array([a.contacts for a in r.agents], dtype=float)
    half = r.half_extents
    inside = (np.abs(pos[:, 0]) <= half[0]) & (np.abs(pos[:, 1]) <= half[1]) & (pos[:, 2] >= 0) & (pos[:, 2] <= 2 * half[2])
    out["rel_height_mean"] = float(pos[:, 2].mean())
    out["rel_horizontal_dist_mean"] = float(np.hypot(pos[:, 0], pos[:, 1]).mean())
    out["inside_obb_fraction"] = float(inside.mean())
    out["tilt_deg_mean"] = float(np.mean([a.tilt_deg for a in r.agents]))
    out["contact_object_mean"] = float(contacts[:, 0].mean())
    out["contact_agent_mean"] = float(contacts[:, 1].mean())
    out["contact_ground_mean"] = float(contacts[:, 2].mean())
    out["retained_fraction"] = sum(_retained(a.contacts) for a in r.agents) / n
    return out


def evaluate(program: ScoringProgram, r: ResultantConfiguration | dict) -> float:
    """S = bias + sum of weight * transform(feature)."""
    feats = r if isinstance(r, dict) else compute_features(r)
    s = program.bias
    for t in program.terms:
        s += t.weight * t.transform(feats[t.feature])
    return s


def is_success(score: float) -> bool:
    return score > 0.0


@dataclass(frozen=True)
class CandidateInteraction:
    pose_id: int
    plan_id: int
    description: str
    trajectory: dict | None
    result: ResultantConfiguration
    score: float

    def __post_init__(self) -> None:
        if not self.score > 0:
            raise ValueError("candidates must score above zero")

    def to_dict(self) -> dict:
        return {
            "pose_id": self.pose_id,
            "plan_id": self.plan_id,
            "description": self.description,
            "trajectory": self.trajectory,
            "score": self.score,
        }


@dataclass(frozen=True)
class ValidationOutcome:
    valid: bool
    reason: str


def _validation_context(c: CandidateInteraction, analysis: AffordanceAnalysis) -> dict:
    r = c.result
    return {
        "affordance": analysis.effective_affordance,
        "expected_outcome": analysis.expected_outcome,
        "score": round(c.score, 9),
        "pose_id": c.pose_id,
        "plan_id": c.plan_id,
        "half_extents": [round(float(x), 9) for x in r.half_extents],
        "agent_radius": round(r.agent_radius, 9),
        "agents": [
            {
                "rel_pos": [round(float(x), 9) for x in a.rel_pose.position],
                "contacts": list(a.contacts),
                "tilt_deg": round(a.tilt_deg, 6),
            }
            for a in r.agents
        ],
    }


def validate_candidates(
    candidates: list[CandidateInteraction],
    analysis: AffordanceAnalysis,
    provider: Provider,
    fail_open: bool = False,
) -> list[tuple[CandidateInteraction, ValidationOutcome]]:
    """Judge each candidate for common-sense consistency.

    A provider failure rejects the candidate unless ``fail_open`` is set.
    """
    out = []
    for c in candidates:
        try:
            doc = provider.complete(make_request("pose_validation", _validation_context(c, analysis)))
            outcome = ValidationOutcome(bool(doc["valid"]), doc.get("reason", ""))
        except ProviderError as exc:
            outcome = ValidationOutcome(fail_open, f"validation unavailable: {exc}")
        out.append((c, outcome))
    return out


@dataclass
class AffordanceVerdict:
    functional: bool
    effective_affordance: str
    optimal_pose: StablePose | None = None
    optimal_pose_id: int | None = None
    best_interaction: CandidateInteraction | None = None
    per_pose_report: list[dict] = field(default_factory=list)
    validation_enabled: bool = True

    def __post_init__(self) -> None:
        present = self.optimal_pose is not None and self.best_interaction is not None
        if self.functional != present:
            raise ValueError("a functional verdict needs an optimal pose and an interaction, and only then")

    def to_dict(self) -> dict:
        return {
            "functional": self.functional,
            "effective_affordance": self.effective_affordance,
            "optimal_pose_id": self.optimal_pose_id,
            "optimal_pose": self.optimal_pose.to_dict() if self.optimal_pose is not None else None,
            "best_interaction": self.best_interaction.to_dict() if self.best_interaction is not None else None,
            "validation_enabled": self.validation_enabled,
            "per_pose_report": self.per_pose_report,
        }


def decide(
    all_pose_results: dict[int, list[ResultantConfiguration]],
    program: ScoringProgram,
    analysis: AffordanceAnalysis,
    stable_poses: list[StablePose],
    provider: Provider | None = None,
    validate: bool = True,
    fail_open: bool = False,
) -> AffordanceVerdict:
    """Score, select, validate, and pick the best validated interaction.

    Ties on the score go to the lower pose id, then the lower plan id.
    With ``validate`` off every candidate passes (the ablation path).
    """
    report = []
    candidates = []
    for pose_id in sorted(all_pose_results):
        for r in sorted(all_pose_results[pose_id], key=lambda x: x.plan_id):
            s = evaluate(program, r)
            row = {"pose_id": pose_id, "plan_id": r.plan_id, "score": s, "candidate": is_success(s),
                   "validated": None, "reason": ""}
            report.append(row)
            if is_success(s):
                traj = r.trajectory.to_dict() if r.trajectory is not None else None
                candidates.append(CandidateInteraction(pose_id, r.plan_id, r.description, traj, r, s))

    if validate:
        if provider is None:
            raise ValueError("validation needs a provider")
        judged = validate_candidates(candidates, analysis, provider, fail_open)
    else:
        judged = [(c, ValidationOutcome(True, "validation disabled")) for c in candidates]

    by_key = {(row["pose_id"], row["plan_id"]): row for row in report}
    best = None
    for c, outcome in judged:
        row = by_key[(c.pose_id, c.plan_id)]
        row["validated"] = outcome.valid
        row["reason"] = outcome.reason
        if not outcome.valid:
            continue
        if best is None or (c.score, -c.pose_id, -c.plan_id) > (best.score, -best.pose_id, -best.plan_id):
            best = c

    if best is None:
        return AffordanceVerdict(False, analysis.effective_affordance, per_pose_report=report, validation_enabled=validate)
    return AffordanceVerdict(
        True,
        analysis.effective_affordance,
        optimal_pose=stable_poses[best.pose_id],
        optimal_pose_id=best.pose_id,
        best_interaction=best,
        per_pose_report=report,
        validation_enabled=validate,
    )
