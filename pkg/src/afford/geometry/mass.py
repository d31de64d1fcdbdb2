"""Mass properties by signed-tetrahedron integration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from afford.errors import DegenerateGeometryError, InvalidInputError
from afford.geometry.hull import convex_hull
from afford.geometry.mesh import TriMesh

DEFAULT_DENSITY = 500.0

# second moment of the canonical tetrahedron (0, e1, e2, e3), divided by its volume * 6
_CANONICAL = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 120.0


@dataclass(frozen=True)
class MassProperties:
    volume: float
    mass: float
    center_of_mass: np.ndarray
    inertia: np.ndarray  # about the centre of mass, world-aligned
    watertight: bool = True
    from_hull: bool = False

    def to_dict(self) -> dict:
        return {
            "volume": self.volume,
            "mass": self.mass,
            "center_of_mass": [float(x) for x in self.center_of_mass],
            "inertia": [[float(x) for x in row] for row in self.inertia],
            "watertight": self.watertight,
            "from_hull": self.from_hull,
        }


def _integrate(vertices: np.ndarray, triangles: np.ndarray, density: float):
    ref = vertices.mean(axis=0)
    v = vertices - ref
    a, b, c = v[triangles[:, 0]], v[triangles[:, 1]], v[triangles[:, 2]]
    det = np.einsum("ij,ij->i", a, np.cross(b, c))
    vol = det.sum() / 6.0
    if not vol > 0.0:
        raise DegenerateGeometryError(f"computed volume {vol:.3e} m^3 is not positive")
    com = ((a + b + c) * det[:, None]).sum(axis=0) / 24.0 / vol
    A = np.stack([a, b, c], axis=2)  # columns are the tetra edges
    cov = np.einsum("k,kij,jl,kml->im", det, A, _CANONICAL, A)
    cov *= density
    mass = density * vol
    cov_com = cov - mass * np.outer(com, com)
    inertia = np.trace(cov_com) * np.eye(3) - cov_com
    inertia = 0.5 * (inertia + inertia.T)
    return vol, mass, com + ref, inertia


def compute_mass_properties(mesh: TriMesh, density: float = DEFAULT_DENSITY) -> MassProperties:
    """Volume, mass, centre of mass and inertia of a solid mesh.

    Open meshes are replaced by their convex hull (``from_hull`` is set).
    """
    if not density > 0:
        raise InvalidInputError("density must be positive")
    watertight = mesh.metadata.get("watertight")
    if watertight is None:
        watertight = mesh.is_watertight()
    target = mesh if watertight else convex_hull(mesh)
    vol, mass, com, inertia = _integrate(target.vertices, target.triangles, density)
    if np.any(np.linalg.eigvalsh(inertia) <= 0):
        raise DegenerateGeometryError("inertia tensor is not positive definite")
    return MassProperties(vol, mass, com, inertia, watertight=bool(watertight), from_hull=not watertight)
