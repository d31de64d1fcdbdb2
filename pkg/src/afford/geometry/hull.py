"""Convex hulls (Qhull-backed) and merged hull faces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from afford.errors import DegenerateGeometryError
from afford.geometry.mesh import TriMesh


def _qhull(points: np.ndarray) -> ConvexHull:
    if len(points) < 4:
        raise DegenerateGeometryError("convex hull needs at least 4 points")
    try:
        return ConvexHull(points)
    except QhullError as exc:
        raise DegenerateGeometryError(f"points are coplanar or degenerate: {exc.args[0].splitlines()[0]}") from None


def convex_hull(mesh: TriMesh | np.ndarray) -> TriMesh:
    """Convex hull as an outward-oriented triangle mesh."""
    pts = mesh.vertices if isinstance(mesh, TriMesh) else np.asarray(mesh, dtype=float)
    hull = _qhull(pts)
    used = np.unique(hull.simplices)
    remap = -np.ones(len(pts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    verts = pts[used]
    tris = remap[hull.simplices].copy()
    center = verts.mean(axis=0)
    a, b, c = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
    normals = np.cross(b - a, c - a)
    flip = np.einsum("ij,ij->i", normals, a - center) < 0
    tris[flip] = tris[flip][:, ::-1]
    # Qhull may emit slivers from nearly-coplanar input; drop them
    area = 0.5 * np.linalg.norm(np.cross(verts[tris[:, 1]] - verts[tris[:, 0]], verts[tris[:, 2]] - verts[tris[:, 0]]), axis=1)
    tris = tris[area > 1e-12]
    return TriMesh(verts, tris, {"convex_hull": True})


@dataclass(frozen=True)
class HullFace:
    normal: np.ndarray  # outward unit normal
    offset: float  # plane: normal . x = offset
    vertices: np.ndarray  # polygon corners, counter-clockwise seen from outside


def _polygon_order(points: np.ndarray, normal: np.ndarray) -> np.ndarray:
    u = np.cross(normal, [1.0, 0.0, 0.0])
    if np.linalg.norm(u) < 1e-6:
        u = np.cross(normal, [0.0, 1.0, 0.0])
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    c = points.mean(axis=0)
    ang = np.arctan2((points - c) @ v, (points - c) @ u)
    return points[np.argsort(ang)]


def hull_faces(hull: TriMesh, tol: float = 1e-7) -> list[HullFace]:
    """Merge coplanar hull triangles into polygonal faces."""
    v, t = hull.vertices, hull.triangles
    a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    n = np.cross(b - a, c - a)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    d = np.einsum("ij,ij->i", n, a)
    scale = max(1.0, float(np.abs(v).max()))
    faces: list[HullFace] = []
    assigned = np.zeros(len(t), dtype=bool)
    for i in range(len(t)):
        if assigned[i]:
            continue
        same = (~assigned) & (np.abs(n @ n[i] - 1.0) < tol) & (np.abs(d - d[i]) < tol * scale)
        assigned |= same
        idx = np.unique(t[same])
        normal = n[same].mean(axis=0)
        normal /= np.linalg.norm(normal)
        pts = v[idx]
        # keep only polygon corners: points on the 2D hull of the face
        faces.append(HullFace(normal, float(d[i]), _polygon_corners(pts, normal)))
    return faces


def _polygon_corners(pts: np.ndarray, normal: np.ndarray) -> np.ndarray:
    ordered = _polygon_order(pts, normal)
    if len(ordered) <= 3:
        return ordered
    keep = []
    m = len(ordered)
    for k in range(m):
        p0, p1, p2 = ordered[k - 1], ordered[k], ordered[(k + 1) % m]
        if np.linalg.norm(np.cross(p1 - p0, p2 - p1)) > 1e-12:
            keep.append(p1)
    return np.array(keep) if len(keep) >= 3 else ordered
