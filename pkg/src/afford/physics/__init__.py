from afford.physics.config import WorldConfig
from afford.physics.world import Body, ContactPoint, MoveResult, World

__all__ = ["Body", "ContactPoint", "MoveResult", "World", "WorldConfig"]
