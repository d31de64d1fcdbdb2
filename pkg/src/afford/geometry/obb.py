"""Oriented bounding boxes."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from afford.errors import DegenerateGeometryError, InvalidInputError
from afford.geometry.hull import convex_hull, hull_faces
from afford.geometry.mesh import TriMesh
from afford.geometry.pose import Pose

MIN_HALF_EXTENT = 1e-4
GRID_HALF_SPAN_DEG = 15
GRID_STEP_DEG = 1


@dataclass(frozen=True)
class Obb:
    half_extents: np.ndarray
    frame: Pose

    def __post_init__(self) -> None:
        h = np.asarray(self.half_extents, dtype=float)
        if h.shape != (3,) or np.any(h <= 0) or not np.all(np.isfinite(h)):
            raise InvalidInputError("OBB half extents must be three positive numbers")
        h = h.copy()
        h.flags.writeable = False
        object.__setattr__(self, "half_extents", h)

    @property
    def dims(self) -> np.ndarray:
        return 2.0 * self.half_extents

    @property
    def volume(self) -> float:
        return float(np.prod(self.dims))

    def contains(self, points, tol: float = 1e-6) -> np.ndarray:
        local = self.frame.inverse().apply(points)
        return np.all(np.abs(local) <= self.half_extents + tol, axis=-1)

    def to_dict(self) -> dict:
        return {"half_extents": [float(x) for x in self.half_extents], "frame": self.frame.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "Obb":
        return cls(d["half_extents"], Pose.from_dict(d["frame"]))


def _euler_grid(half_span_deg: int, step_deg: int) -> np.ndarray:
    ang = np.deg2rad(np.arange(-half_span_deg, half_span_deg + step_deg, step_deg))
    cz, sz = np.cos(ang), np.sin(ang)
    rz = np.zeros((len(ang), 3, 3))
    rz[:, 0, 0], rz[:, 0, 1], rz[:, 1, 0], rz[:, 1, 1], rz[:, 2, 2] = cz, -sz, sz, cz, 1
    ry = np.zeros((len(ang), 3, 3))
    ry[:, 0, 0], ry[:, 0, 2], ry[:, 2, 0], ry[:, 2, 2], ry[:, 1, 1] = cz, sz, -sz, cz, 1
    rx = np.zeros((len(ang), 3, 3))
    rx[:, 1, 1], rx[:, 1, 2], rx[:, 2, 1], rx[:, 2, 2], rx[:, 0, 0] = cz, -sz, sz, cz, 1
    out = np.einsum("aij,bjk,ckl->abcil", rz, ry, rx)
    return out.reshape(-1, 3, 3)


_GRID = None


def _grid() -> np.ndarray:
    global _GRID
    if _GRID is None:
        _GRID = _euler_grid(GRID_HALF_SPAN_DEG, GRID_STEP_DEG)
    return _GRID


def _box_volume(frames: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """AABB volume of ``pts`` in each frame; ``frames`` columns are box axes."""
    proj = np.einsum("nd,kda->kna", pts, frames)
    ext = proj.max(axis=1) - proj.min(axis=1)
    return np.prod(np.maximum(ext, 2 * MIN_HALF_EXTENT), axis=1)


def _min_area_rect(p2: np.ndarray) -> tuple[float, np.ndarray]:
    """Rotating-calipers style search over 2D hull edge directions."""
    from scipy.spatial import ConvexHull, QhullError

    try:
        ring = p2[ConvexHull(p2).vertices]
    except (QhullError, ValueError):
        ring = p2
    best = (np.inf, np.array([1.0, 0.0]))
    edges = np.roll(ring, -1, axis=0) - ring
    for e in edges:
        n = np.linalg.norm(e)
        if n < 1e-15:
            continue
        u = e / n
        w = np.array([-u[1], u[0]])
        a = np.ptp(ring @ u) * np.ptp(ring @ w)
        if a < best[0] - 1e-15:
            best = (a, u)
    return best


def _face_candidates(hull: TriMesh) -> list[np.ndarray]:
    out = []
    for face in hull_faces(hull):
        n = face.normal
        u = np.cross(n, [1.0, 0.0, 0.0])
        if np.linalg.norm(u) < 1e-6:
            u = np.cross(n, [0.0, 1.0, 0.0])
        u /= np.linalg.norm(u)
        v = np.cross(n, u)
        p2 = np.stack([hull.vertices @ u, hull.vertices @ v], axis=1)
        _, d = _min_area_rect(p2)
        a1 = d[0] * u + d[1] * v
        a2 = np.cross(n, a1)
        out.append(np.stack([a1, a2, n], axis=1))
    return out


def _canonical_axes(frame: np.ndarray) -> np.ndarray:
    """Permute and flip box axes to sit as close to the world axes as possible."""
    best, best_score = frame, -np.inf
    for perm in itertools.permutations(range(3)):
        m = frame[:, perm]
        signs = np.sign(np.diag(m))
        signs[signs == 0] = 1.0
        m = m * signs
        if np.linalg.det(m) < 0:
            # flip the least aligned axis to restore a right-handed frame
            k = int(np.argmin(np.abs(np.diag(m))))
            m[:, k] *= -1
        score = float(np.trace(m))
        if score > best_score + 1e-12:
            best, best_score = m, score
    return best


def box_from_frame(pts: np.ndarray, axes: np.ndarray) -> Obb:
    proj = pts @ axes
    lo, hi = proj.min(axis=0), proj.max(axis=0)
    half = np.maximum(0.5 * (hi - lo), MIN_HALF_EXTENT)
    center = axes @ (0.5 * (hi + lo))
    return Obb(half, Pose.from_matrix(axes, center))


def compute_obb(mesh: TriMesh) -> Obb:
    """Small oriented box around ``mesh``.

    Candidates are the PCA frame refined on a +-15 degree Euler grid and
    the frames built on each hull face (face normal plus the minimal-area
    rectangle of the projection); the smallest box wins.
    """
    pts = np.unique(mesh.vertices, axis=0)
    try:
        hull = convex_hull(pts)
        pts = hull.vertices
    except DegenerateGeometryError:
        hull = None

    centered = pts - pts.mean(axis=0)
    _, vecs = np.linalg.eigh(centered.T @ centered)
    if np.linalg.det(vecs) < 0:
        vecs[:, 0] *= -1
    grid = _grid()
    best_vol = np.inf
    best_axes = vecs
    for chunk in np.array_split(np.arange(len(grid)), max(1, len(grid) * len(pts) // 400_000)):
        frames = np.einsum("ij,kjl->kil", vecs, grid[chunk])
        vols = _box_volume(frames, pts)
        k = int(np.argmin(vols))
        if vols[k] < best_vol - 1e-15:
            best_vol, best_axes = vols[k], frames[k]
    if hull is not None:
        cands = _face_candidates(hull)
        if cands:
            vols = _box_volume(np.array(cands), pts)
            k = int(np.argmin(vols))
            if vols[k] < best_vol * (1 - 1e-9):
                best_axes = cands[k]
    return box_from_frame(pts, _canonical_axes(best_axes))


def footprint_box(mesh_world: TriMesh) -> tuple[float, np.ndarray, np.ndarray]:
    """Yaw, centre and half extents of the minimal-area footprint rectangle.

    The box axes keep world z vertical; ``yaw`` rotates the world x axis
    onto the rectangle's long side.
    """
    pts = mesh_world.vertices
    _, u = _min_area_rect(pts[:, :2])
    w = np.array([-u[1], u[0]])
    ext_u, ext_w = np.ptp(pts[:, :2] @ u), np.ptp(pts[:, :2] @ w)
    if ext_w > ext_u + 1e-12:
        u, w = w, -u
    # smallest yaw among the equivalent (+-u) choices
    yaw = float(np.arctan2(u[1], u[0]))
    if yaw > np.pi / 2 + 1e-12:
        yaw -= np.pi
    elif yaw <= -np.pi / 2 + 1e-12:
        yaw += np.pi
    c, s = np.cos(yaw), np.sin(yaw)
    axes2 = np.array([[c, -s], [s, c]])
    proj = pts[:, :2] @ axes2
    lo, hi = proj.min(axis=0), proj.max(axis=0)
    center_xy = axes2 @ (0.5 * (lo + hi))
    zlo, zhi = pts[:, 2].min(), pts[:, 2].max()
    half = np.maximum(np.array([*(0.5 * (hi - lo)), 0.5 * (zhi - zlo)]), MIN_HALF_EXTENT)
    return yaw, np.array([center_xy[0], center_xy[1], 0.5 * (zlo + zhi)]), half
