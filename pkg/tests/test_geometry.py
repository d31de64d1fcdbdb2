import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afford.errors import DegenerateGeometryError, FormatError, IndexOutOfRangeError, InvalidInputError
from afford.geometry.hull import convex_hull, hull_faces
from afford.geometry.mass import compute_mass_properties
from afford.geometry.mesh import TriMesh, load_mesh
from afford.geometry.obb import MIN_HALF_EXTENT, compute_obb
from afford.geometry.pose import Pose, quat_from_axis_angle, quat_to_matrix, random_quaternion
from helpers import box_mesh, tetrahedron

CUBE_OFF = """OFF
8 6 0
0 0 0
1 0 0
1 1 0
0 1 0
0 0 1
1 0 1
1 1 1
0 1 1
4 0 3 2 1
4 4 5 6 7
4 0 1 5 4
4 1 2 6 5
4 2 3 7 6
4 3 0 4 7
"""

quats = st.tuples(*[st.floats(-1, 1) for _ in range(4)]).filter(lambda q: np.linalg.norm(q) > 0.1)
vec3 = st.tuples(*[st.floats(-2, 2) for _ in range(3)])


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


# loading ---------------------------------------------------------------------


def test_off_cube_counts(tmp_path):
    mesh = load_mesh(_write(tmp_path, "cube.off", CUBE_OFF))
    assert len(mesh.vertices) == 8
    assert len(mesh.triangles) == 12
    assert mesh.is_watertight()


def test_off_header_glued_to_counts(tmp_path):
    text = CUBE_OFF.replace("OFF\n8 6 0", "OFF8 6 0")
    assert len(load_mesh(_write(tmp_path, "glued.off", text)).triangles) == 12


def test_obj_index_out_of_range(tmp_path):
    verts = "".join(f"v {x} {y} {z}\n" for x, y, z in itertools.product((0, 0.1), repeat=3))
    p = _write(tmp_path, "bad.obj", verts + "f 1 2 3\nf 1 2 9\n")
    with pytest.raises(IndexOutOfRangeError) as exc:
        load_mesh(p)
    assert exc.value.line == 10


def test_missing_header_is_format_error(tmp_path):
    with pytest.raises(FormatError):
        load_mesh(_write(tmp_path, "x.off", "8 6 0\n0 0 0\n"))


def test_unknown_extension_rejected(tmp_path):
    with pytest.raises(InvalidInputError):
        load_mesh(_write(tmp_path, "x.stl", "solid"))


def test_large_mesh_is_rescaled(tmp_path):
    # a 50 x 50 x 50 cube has a diagonal of about 87 m
    text = CUBE_OFF.replace("OFF\n8 6 0\n", "").splitlines()
    verts = [" ".join(str(50 * float(c)) for c in line.split()) for line in text[:8]]
    mesh = load_mesh(_write(tmp_path, "big.off", "OFF\n8 6 0\n" + "\n".join(verts + text[8:]) + "\n"))
    assert mesh.diagonal == pytest.approx(0.5, abs=1e-12)
    assert mesh.metadata["scale"] == pytest.approx(0.5 / np.sqrt(3 * 50.0**2))


def test_in_band_mesh_is_not_rescaled(tmp_path):
    mesh = load_mesh(_write(tmp_path, "cube.off", CUBE_OFF))
    assert mesh.diagonal == pytest.approx(np.sqrt(3.0))


def test_off_round_trip(tmp_path):
    box = box_mesh((0.1, 0.2, 0.3))
    again = load_mesh(_write(tmp_path, "box.off", box.to_off()))
    np.testing.assert_allclose(again.vertices, box.vertices, atol=1e-12)
    np.testing.assert_array_equal(again.triangles, box.triangles)


# poses -------------------------------------------------------------------------


@given(quats, vec3, quats, vec3)
def test_pose_compose_matches_homogeneous(q1, p1, q2, p2):
    a, b = Pose(np.array(q1), p1), Pose(np.array(q2), p2)
    np.testing.assert_allclose((a @ b).homogeneous(), a.homogeneous() @ b.homogeneous(), atol=1e-9)


@given(quats, vec3)
def test_pose_inverse(q, p):
    a = Pose(np.array(q), p)
    assert (a @ a.inverse()).allclose(Pose(), atol=1e-9)


@given(quats)
def test_rotation_matrix_orthonormal(q):
    m = quat_to_matrix(np.array(q) / np.linalg.norm(q))
    np.testing.assert_allclose(m @ m.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(m) == pytest.approx(1.0)


# hull --------------------------------------------------------------------------


def test_hull_drops_interior_point():
    pts = np.vstack([box_mesh((1, 1, 1)).vertices, [[0.1, -0.2, 0.05]]])
    hull = convex_hull(pts)
    assert len(hull.vertices) == 8
    assert len(hull_faces(hull)) == 6


def test_hull_of_tetrahedron():
    hull = convex_hull(tetrahedron())
    assert len(hull.vertices) == 4
    assert len(hull.triangles) == 4
    assert len(hull_faces(hull)) == 4


@pytest.mark.parametrize("seed", range(5))
def test_hull_contains_all_points(seed):
    pts = np.random.default_rng(seed).normal(size=(100, 3))
    hull = convex_hull(pts)
    for f in hull_faces(hull):
        assert np.all(pts @ f.normal - f.offset <= 1e-9)
    assert hull.is_watertight()


def test_coplanar_points_are_degenerate():
    with pytest.raises(DegenerateGeometryError):
        convex_hull(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0.0]]))


# oriented boxes ----------------------------------------------------------------


def _grid_yaw_volume(pts: np.ndarray) -> float:
    """Smallest box volume over yaw angles on a 1 degree grid, z kept vertical."""
    best = np.inf
    for deg in range(90):
        r = quat_to_matrix(quat_from_axis_angle([0, 0, 1], np.radians(deg)))
        proj = pts @ r
        best = min(best, float(np.prod(proj.max(axis=0) - proj.min(axis=0))))
    return best


def test_obb_axis_aligned_box():
    obb = compute_obb(box_mesh((0.2, 0.4, 0.6)))
    np.testing.assert_allclose(obb.half_extents, [0.1, 0.2, 0.3], atol=1e-9)


def test_obb_rotated_box_matches_grid_oracle():
    mesh = box_mesh((0.2, 0.4, 0.6)).transformed(Pose(quat_from_axis_angle([0, 0, 1], np.radians(30))))
    obb = compute_obb(mesh)
    np.testing.assert_allclose(np.sort(obb.half_extents), [0.1, 0.2, 0.3], atol=1e-6)
    assert obb.volume <= _grid_yaw_volume(mesh.vertices) + 1e-9
    assert np.all(obb.contains(mesh.vertices))


def test_obb_of_flat_triangle_is_clamped():
    tri = TriMesh(np.array([[0, 0, 0], [0.1, 0, 0], [0, 0.1, 0.0]]), np.array([[0, 1, 2]]))
    obb = compute_obb(tri)
    assert np.isclose(obb.half_extents, MIN_HALF_EXTENT).sum() == 1
    assert np.all(obb.contains(tri.vertices))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_obb_contains_every_vertex(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-0.2, 0.2, size=(30, 3))
    obb = compute_obb(convex_hull(pts))
    assert np.all(obb.contains(pts, tol=1e-9))


# mass properties ---------------------------------------------------------------


def test_unit_cube_mass_properties():
    mp = compute_mass_properties(box_mesh((1, 1, 1), center=(0.5, 0.5, 0.5)), density=1000.0)
    assert mp.volume == pytest.approx(1.0)
    assert mp.mass == pytest.approx(1000.0)
    np.testing.assert_allclose(mp.center_of_mass, [0.5, 0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(mp.inertia, np.eye(3) * 1000.0 / 6.0, atol=1e-9)


def test_translated_cube_center_of_mass():
    mp = compute_mass_properties(box_mesh((1, 1, 1), center=(1.5, 2.5, 3.5)), density=1000.0)
    np.testing.assert_allclose(mp.center_of_mass, [1.5, 2.5, 3.5], atol=1e-12)
    np.testing.assert_allclose(mp.inertia, np.eye(3) * 1000.0 / 6.0, atol=1e-9)


def test_box_inertia_formula():
    a, b, c = 0.1, 0.2, 0.3
    mp = compute_mass_properties(box_mesh((a, b, c)), density=500.0)
    m = 500.0 * a * b * c
    expected = m / 12.0 * np.diag([b * b + c * c, a * a + c * c, a * a + b * b])
    np.testing.assert_allclose(mp.inertia, expected, rtol=1e-9, atol=1e-15)


def test_open_shell_uses_hull():
    box = box_mesh((0.1, 0.1, 0.1))
    faces_up = box.vertices[box.triangles].mean(axis=1)[:, 2] > 0.049
    shell = TriMesh(box.vertices, box.triangles[~faces_up])
    assert not shell.is_watertight()
    mp = compute_mass_properties(shell)
    assert mp.watertight is False
    assert mp.from_hull is True
    assert mp.volume == pytest.approx(1e-3)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_mass_properties_follow_rigid_motion(seed):
    rng = np.random.default_rng(seed)
    mesh = convex_hull(rng.uniform(-0.1, 0.1, size=(20, 3)))
    pose = Pose(random_quaternion(rng), rng.uniform(-1, 1, size=3))
    a, b = compute_mass_properties(mesh), compute_mass_properties(mesh.transformed(pose))
    r = pose.matrix
    assert b.mass == pytest.approx(a.mass, rel=1e-9)
    np.testing.assert_allclose(b.center_of_mass, pose.apply(a.center_of_mass), atol=1e-9)
    np.testing.assert_allclose(b.inertia, r @ a.inertia @ r.T, atol=1e-9 * np.abs(a.inertia).max())
