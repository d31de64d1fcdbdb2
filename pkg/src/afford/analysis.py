"""Affordance analysis: task description to interaction-based definition."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from afford.errors import InvalidInputError
from afford.reasoner.core import Provider, make_request


@dataclass(frozen=True)
class TaskDescription:
    affordance_name: str
    obb_dims: tuple[float, float, float]
    object_position: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if not self.affordance_name or not self.affordance_name.strip():
            raise InvalidInputError("affordance name must be non-empty")
        dims = tuple(float(x) for x in self.obb_dims)
        if len(dims) != 3 or not all(d > 0 and np.isfinite(d) for d in dims):
            raise InvalidInputError("obb_dims must be three positive numbers")
        object.__setattr__(self, "obb_dims", dims)
        object.__setattr__(self, "object_position", tuple(float(x) for x in self.object_position))
        object.__setattr__(self, "affordance_name", self.affordance_name.strip().lower())

    def context(self, name: str | None = None) -> dict:
        return {
            "affordance": name or self.affordance_name,
            "obb_dims": [round(d, 9) for d in self.obb_dims],
            "object_position": [round(p, 9) for p in self.object_position],
        }


@dataclass(frozen=True)
class AffordanceAnalysis:
    effective_affordance: str
    ibd: str
    agent_description: str
    interaction_description: str
    expected_outcome: str
    substituted: bool = False
    original_affordance: str | None = None

    def __post_init__(self) -> None:
        for name in ("effective_affordance", "ibd", "agent_description", "interaction_description", "expected_outcome"):
            if not getattr(self, name).strip():
                raise InvalidInputError(f"{name} must be non-empty")
        if self.substituted and self.effective_affordance == self.original_affordance:
            raise InvalidInputError("a substituted analysis must change the affordance")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AffordanceAnalysis":
        return cls(**d)


@dataclass(frozen=True)
class DimensionCheck:
    match: bool
    alternative: str | None = None


def _request_analysis(task: TaskDescription, name: str, provider: Provider) -> dict:
    return provider.complete(make_request("affordance_analysis", task.context(name)))


def check_dimension_match(affordance_name: str, obb_dims, provider: Provider) -> DimensionCheck:
    task = TaskDescription(affordance_name, tuple(obb_dims))
    doc = _request_analysis(task, task.affordance_name, provider)
    if doc["dimension_match"]:
        return DimensionCheck(True)
    return DimensionCheck(False, doc.get("alternative_affordance"))


def analyze(task: TaskDescription, provider: Provider) -> AffordanceAnalysis:
    """Analyze ``task``, substituting a size-appropriate affordance if needed.

    A mismatch without a usable alternative keeps the original name.
    """
    doc = _request_analysis(task, task.affordance_name, provider)
    name = task.affordance_name
    substituted = False
    alt = doc.get("alternative_affordance")
    if not doc["dimension_match"] and alt and alt.strip().lower() != name:
        name = alt.strip().lower()
        substituted = True
        doc = _request_analysis(task, name, provider)
    return AffordanceAnalysis(
        effective_affordance=name,
        ibd=doc["ibd"],
        agent_description=doc["agent_description"],
        interaction_description=doc["interaction_description"],
        expected_outcome=doc["expected_outcome"],
        substituted=substituted,
        original_affordance=task.affordance_name,
    )
