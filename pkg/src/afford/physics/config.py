"""Simulation parameters."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from afford.errors import InvalidInputError


@dataclass(frozen=True)
class WorldConfig:
    timestep: float = 1.0 / 240.0
    gravity: float = 9.81
    solver_iterations: int = 10
    friction: float = 0.5
    # resisting torque limit is rolling_friction * normal force * radius
    rolling_friction: float = 0.02
    restitution: float = 0.0
    contact_slop: float = 1e-3
    baumgarte: float = 0.2
    settle_speed_eps: float = 1e-2
    settle_window: int = 60
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not self.timestep > 0:
            raise InvalidInputError("timestep must be positive")
        if self.solver_iterations < 1:
            raise InvalidInputError("solver_iterations must be at least 1")
        if not 0.0 <= self.restitution <= 1.0:
            raise InvalidInputError("restitution must lie in [0, 1]")
        if self.friction < 0 or self.rolling_friction < 0:
            raise InvalidInputError("friction coefficients must be non-negative")
        if self.contact_slop < 0 or self.settle_speed_eps <= 0 or self.settle_window < 1:
            raise InvalidInputError("invalid contact or settle parameters")

    def with_(self, **kw) -> "WorldConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_mapping(cls, values: dict) -> "WorldConfig":
        """Build from a loose mapping, coercing strings; unknown keys are ignored."""
        kw = {}
        for f in fields(cls):
            if f.name in values:
                kw[f.name] = int(values[f.name]) if f.type == "int" else float(values[f.name])
        return cls(**kw)
