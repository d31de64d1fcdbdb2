from afford.geometry.hull import HullFace, convex_hull, hull_faces
from afford.geometry.mass import DEFAULT_DENSITY, MassProperties, compute_mass_properties
from afford.geometry.mesh import TriMesh, concatenate, load_mesh
from afford.geometry.obb import Obb, compute_obb, footprint_box
from afford.geometry.pose import Pose

__all__ = [
    "DEFAULT_DENSITY",
    "HullFace",
    "MassProperties",
    "Obb",
    "Pose",
    "TriMesh",
    "compute_mass_properties",
    "compute_obb",
    "concatenate",
    "convex_hull",
    "footprint_box",
    "hull_faces",
    "load_mesh",
]
