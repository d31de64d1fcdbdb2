"""Shared mesh builders and scene generators for the tests."""

from __future__ import annotations

import itertools

import numpy as np

from afford.geometry.hull import convex_hull
from afford.geometry.mesh import TriMesh
from afford.geometry.pose import Pose, random_quaternion
from afford.physics.config import WorldConfig
from afford.physics.world import World


def box_mesh(dims, center=(0.0, 0.0, 0.0)) -> TriMesh:
    h = 0.5 * np.asarray(dims, dtype=float)
    pts = np.array(list(itertools.product(*[(-x, x) for x in h]))) + np.asarray(center, dtype=float)
    return convex_hull(pts)


def tetrahedron(edge: float = 0.1) -> TriMesh:
    pts = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    return convex_hull(pts * edge / (2.0 * np.sqrt(2.0)))


def hex_prism(radius: float = 0.05, height: float = 0.06) -> TriMesh:
    ang = np.arange(6) * np.pi / 3.0
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang), np.zeros(6)], axis=1)
    return convex_hull(np.vstack([ring + [0, 0, -height / 2], ring + [0, 0, height / 2]]))


def cone(radius: float = 0.05, height: float = 0.1, n: int = 32) -> TriMesh:
    ang = np.arange(n) * 2.0 * np.pi / n
    base = np.stack([radius * np.cos(ang), radius * np.sin(ang), np.zeros(n)], axis=1)
    return convex_hull(np.vstack([base, [[0.0, 0.0, height]]]))


def random_scene(seed: int, config: WorldConfig | None = None) -> tuple[World, list[int]]:
    """Ground plus a few spheres and boxes dropped from random poses."""
    rng = np.random.default_rng(seed)
    world = World(config or WorldConfig())
    world.add_ground()
    ids = []
    placed: list[tuple[np.ndarray, float]] = []
    n = int(rng.integers(1, 4))
    while len(ids) < n:
        xy = rng.uniform(-0.4, 0.4, size=2)
        z = rng.uniform(0.05, 0.25)
        if rng.random() < 0.5:
            r = float(rng.uniform(0.02, 0.06))
            center, bound = np.array([*xy, z + r]), r
            shape = ("sphere", r)
        else:
            dims = rng.uniform(0.03, 0.12, size=3)
            bound = float(np.linalg.norm(dims) / 2)
            center = np.array([*xy, z + bound])
            shape = ("box", dims, random_quaternion(rng))
        # bodies start apart so that any energy change comes from the dynamics
        if any(np.linalg.norm(center - c) < bound + b for c, b in placed):
            continue
        placed.append((center, bound))
        if shape[0] == "sphere":
            ids.append(world.add_sphere_composite([((0, 0, 0), shape[1])], Pose(position=center),
                                                  mass=float(rng.uniform(0.05, 1.0))))
        else:
            ids.append(world.add_dynamic_mesh(box_mesh(shape[1]), Pose(shape[2], center)))
    return world, ids
