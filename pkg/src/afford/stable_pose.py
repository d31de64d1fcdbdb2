"""Stable resting poses by drop simulation, plus a quasi-static oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from afford.errors import DegenerateGeometryError, InvalidInputError, NoStablePoseError, NumericBlowupError
from afford.geometry.hull import convex_hull, hull_faces
from afford.geometry.mass import DEFAULT_DENSITY, compute_mass_properties
from afford.geometry.mesh import TriMesh
from afford.geometry.pose import Pose, quat_between, quat_mul, random_quaternion, super_fibonacci
from afford.physics.config import WorldConfig
from afford.physics.world import World

DROP_HEIGHT = 0.05
DROP_TIMEOUT = 5.0
CLUSTER_DEG = 10.0
MIN_PROBABILITY = 0.02
# settled up-vectors this close to a hull face normal are snapped onto it
SNAP_DEG = 3.0
SUPPORT_MARGIN = 1e-6


@dataclass(frozen=True)
class StablePose:
    """One class of resting poses.

    ``body_frame_up`` is the world up direction (+z) expressed in the
    object's frame, i.e. the inward normal of the supporting hull face.
    ``pose`` places the object with that face on the ground plane z = 0,
    its frame origin above x = y = 0 and no yaw about the vertical.
    """

    pose: Pose
    body_frame_up: np.ndarray
    probability: float
    cluster_size: int

    def to_dict(self) -> dict:
        return {
            "pose": self.pose.to_dict(),
            "body_frame_up": [float(x) for x in self.body_frame_up],
            "probability": self.probability,
            "cluster_size": self.cluster_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StablePose":
        return cls(Pose.from_dict(d["pose"]), np.asarray(d["body_frame_up"], dtype=float),
                   float(d["probability"]), int(d["cluster_size"]))


def canonical_pose(mesh: TriMesh, up: np.ndarray) -> Pose:
    """Pose turning ``up`` (object frame) to world +z, resting on z = 0.

    The rotation is the minimal swing, so it carries no twist about the
    vertical and depends on ``up`` alone.
    """
    q = quat_between(up, np.array([0.0, 0.0, 1.0]))
    rotated = Pose(q).apply(mesh.vertices)
    return Pose(q, (0.0, 0.0, -float(rotated[:, 2].min())))


def _angle_deg(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.degrees(np.arccos(np.clip(np.dot(a, b), -1.0, 1.0))))


def _face_ups(hull: TriMesh) -> np.ndarray:
    return np.array([-f.normal for f in hull_faces(hull)])


def _snap(up: np.ndarray, face_ups: np.ndarray) -> np.ndarray:
    cos = face_ups @ up
    k = int(np.argmax(cos))
    if cos[k] >= np.cos(np.radians(SNAP_DEG)):
        return face_ups[k].copy()
    return up / np.linalg.norm(up)


def drop_once(mesh: TriMesh, rotation, mass_props, config: WorldConfig,
              drop_height: float = DROP_HEIGHT, max_sim_time: float = DROP_TIMEOUT):
    """Drop ``mesh`` with ``rotation`` from ``drop_height`` above the ground.

    Returns ``(settled, final_pose)``.
    """
    world = World(config)
    world.add_ground()
    lowest = float(Pose(rotation).apply(mesh.vertices)[:, 2].min())
    bid = world.add_dynamic_mesh(mesh, Pose(rotation, (0.0, 0.0, drop_height - lowest)), mass_props)
    settled, _ = world.settle(max_sim_time)
    return settled, world.get_pose(bid)


def drop_orientations(n: int, seed) -> np.ndarray:
    """Quasi-uniform orientations with a seeded global rotation."""
    rng = np.random.default_rng(seed)
    offset = random_quaternion(rng)
    return np.array([quat_mul(offset, q) for q in super_fibonacci(n)])


def find_stable_poses(
    mesh: TriMesh,
    n_orientations: int = 64,
    seed=0,
    config: WorldConfig | None = None,
    density: float = DEFAULT_DENSITY,
    drop_height: float = DROP_HEIGHT,
    max_sim_time: float = DROP_TIMEOUT,
    cluster_deg: float = CLUSTER_DEG,
    min_probability: float = MIN_PROBABILITY,
) -> list[StablePose]:
    """Drop the object from quasi-uniform orientations and cluster the outcomes."""
    if n_orientations < 1:
        raise InvalidInputError("n_orientations must be at least 1")
    config = config or WorldConfig()
    mass_props = compute_mass_properties(mesh, density)
    hull = convex_hull(mesh)
    face_ups = _face_ups(hull)

    ups = []
    for q in drop_orientations(n_orientations, seed):
        try:
            settled, final = drop_once(mesh, q, mass_props, config, drop_height, max_sim_time)
        except NumericBlowupError:
            continue
        if not settled:
            continue
        up = final.matrix.T @ np.array([0.0, 0.0, 1.0])
        ups.append(_snap(up, face_ups))
    if not ups:
        raise NoStablePoseError("no drop settled")

    centers: list[np.ndarray] = []
    members: list[int] = []
    for up in ups:
        for k, c in enumerate(centers):
            if _angle_deg(up, c) <= cluster_deg:
                members[k] += 1
                break
        else:
            centers.append(up)
            members.append(1)

    total = len(ups)
    keep = [k for k in range(len(centers)) if members[k] / total >= min_probability]
    if not keep:
        raise NoStablePoseError("every resting class fell below the probability floor")
    kept_total = sum(members[k] for k in keep)
    # sort by probability, ties by first-seen index
    keep.sort(key=lambda k: (-members[k], k))
    return [
        StablePose(canonical_pose(mesh, centers[k]), centers[k], members[k] / kept_total, members[k])
        for k in keep
    ]


def _inside_polygon(p: np.ndarray, poly: np.ndarray, normal: np.ndarray, margin: float) -> bool:
    m = len(poly)
    for i in range(m):
        a, b = poly[i], poly[(i + 1) % m]
        e = b - a
        length = np.linalg.norm(e)
        if length == 0:
            continue
        # inward edge normal for a polygon wound counter-clockwise about ``normal``
        inward = np.cross(normal, e) / length
        if float(np.dot(p - a, inward)) < margin:
            return False
    return True


def static_stability_oracle(hull: TriMesh, com, margin: float = SUPPORT_MARGIN) -> list[np.ndarray]:
    """Up-vectors of hull faces that support the object quasi-statically.

    A face is stable when the centre of mass, projected along the face
    normal, falls strictly inside the face polygon.
    """
    com = np.asarray(com, dtype=float)
    out = []
    for face in hull_faces(hull):
        n = face.normal
        p = com - (np.dot(n, com) - face.offset) * n
        poly = face.vertices
        # hull_faces winds corners counter-clockwise about the outward normal
        if len(poly) < 3:
            raise DegenerateGeometryError("hull face with fewer than 3 corners")
        if _inside_polygon(p, poly, n, margin):
            out.append(-n)
    return out
