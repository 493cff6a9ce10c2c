import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from boot3d.errors import FormatError, InvalidInputError
from boot3d.geometry import (
    Aabb, TriangleMesh, VoxelGrid, box_mesh, icosphere, is_watertight, marching_cubes, mesh_area,
    mesh_bounds, mesh_centroid, mesh_volume, sphere_grid, voxelize,
)
from boot3d.geometry.io import read_landmarks_file, read_obj, read_vxg, write_landmarks_file, write_obj, write_vxg
from boot3d.geometry.mesh import edge_use_counts, merge_meshes, triangle_areas

UNIT = Aabb(np.zeros(3), np.ones(3))


def trilinear_sphere(n, r, center=0.5):
    """Cell-centre occupancy of a ball, averaged over a 4^3 sub-lattice."""
    sub = (np.arange(4) + 0.5) / 4
    c = ((np.arange(n)[:, None] + sub[None, :]) / n).ravel()
    x, y, z = np.meshgrid(c, c, c, indexing="ij")
    inside = ((x - center) ** 2 + (y - center) ** 2 + (z - center) ** 2) <= r * r
    return VoxelGrid.over_bounds(inside.reshape(n, 4, n, 4, n, 4).mean(axis=(1, 3, 5)), UNIT)


# --- grid ---------------------------------------------------------------------

def test_grid_clamps_and_rejects_bad_values():
    g = VoxelGrid(np.full((2, 2, 2), 3.0), np.zeros(3), np.ones(3))
    assert g.values.max() == 1.0 and g.values.dtype == np.float32
    with pytest.raises(InvalidInputError):
        VoxelGrid(np.full((2, 2, 2), np.nan), np.zeros(3), np.ones(3))
    with pytest.raises(InvalidInputError):
        VoxelGrid(np.zeros((2, 2, 2)), np.zeros(3), np.array([1.0, 0.0, 1.0]))


def test_grid_flat_is_x_fastest():
    vals = np.arange(24, dtype=np.float32).reshape(2, 3, 4) / 24
    g = VoxelGrid(vals, np.zeros(3), np.ones(3))
    flat = g.flat()
    assert flat[1] == vals[1, 0, 0] and flat[2] == vals[0, 1, 0]
    back = VoxelGrid.from_flat(flat, (2, 3, 4), g.origin, g.spacing)
    assert np.array_equal(back.values, g.values)


# --- mesh basics --------------------------------------------------------------

def test_right_triangle_area():
    m = TriangleMesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float), np.array([[0, 1, 2]]))
    assert mesh_area(m) == pytest.approx(0.5, abs=1e-15)


def test_icosphere_area_close_to_sphere():
    assert mesh_area(icosphere(1.0, 4)) == pytest.approx(4 * np.pi, rel=5e-3)


def test_single_vertex_mesh_is_rejected():
    m = TriangleMesh(np.zeros((1, 3)), np.zeros((0, 3), dtype=int))
    for fn in (mesh_area, mesh_centroid, mesh_bounds):
        with pytest.raises(InvalidInputError):
            fn(m)


def test_mesh_invariants_enforced():
    v = np.eye(3)
    with pytest.raises(InvalidInputError):
        TriangleMesh(v, np.array([[0, 1, 3]]))
    with pytest.raises(InvalidInputError):
        TriangleMesh(v, np.array([[0, 1, 1]]))
    with pytest.raises(InvalidInputError):
        TriangleMesh(np.array([[0, 0, np.inf], [1, 0, 0], [0, 1, 0]]), np.array([[0, 1, 2]]))
    with pytest.raises(InvalidInputError):
        TriangleMesh(v, np.array([[0, 1, 2]]), landmarks={"nose_tip": 5})


def test_aabb_requires_ordered_corners():
    with pytest.raises(InvalidInputError):
        Aabb(np.ones(3), np.zeros(3))
    assert np.allclose(Aabb.cube(2.0).extent, 4.0)


def test_box_volume_and_centroid():
    b = box_mesh((0, 0, 0), (1, 2, 3))
    assert mesh_volume(b) == pytest.approx(6.0)
    assert np.allclose(mesh_centroid(b), [0.5, 1.0, 1.5])
    assert is_watertight(b)


def test_merge_meshes_offsets_indices():
    a, b = box_mesh(), box_mesh((2, 0, 0), (3, 1, 1))
    m = merge_meshes([a, b])
    assert m.n_triangles == a.n_triangles + b.n_triangles
    assert mesh_volume(m) == pytest.approx(2.0)


# --- marching cubes -------------------------------------------------------------

def test_mc_sphere_area_within_two_percent():
    m = marching_cubes(trilinear_sphere(64, 0.3))
    assert mesh_area(m) == pytest.approx(4 * np.pi * 0.09, rel=0.02)


def test_mc_all_zero_grid_is_empty():
    assert marching_cubes(VoxelGrid.zeros((8, 8, 8), UNIT)).n_triangles == 0


def test_mc_half_space_is_a_plane():
    vals = np.zeros((8, 8, 8))
    vals[:4] = 1.0
    g = VoxelGrid.over_bounds(vals, UNIT)
    m = marching_cubes(g, 0.5)
    assert m.n_triangles > 0
    # values cross 0.5 halfway between the centres of cells 3 and 4
    x3, x4 = g.axis_centers(0)[3], g.axis_centers(0)[4]
    assert np.allclose(m.vertices[:, 0], 0.5 * (x3 + x4), atol=1e-12)


def test_mc_rejects_non_finite_iso():
    with pytest.raises(InvalidInputError):
        marching_cubes(sphere_grid((8, 8, 8), 0.5), np.nan)


def test_mc_watertight_and_outward():
    m = marching_cubes(sphere_grid((32, 32, 32), 0.6))
    assert is_watertight(m)
    assert np.all(edge_use_counts(m) == 2)
    # outward normals (toward lower occupancy) give positive volume
    assert mesh_volume(m) > 0


@given(st.integers(0, 2**31 - 1), st.integers(52, 204).map(lambda k: k / 256 + 1 / 512))
def test_mc_complement_symmetry(seed, iso):
    rng = np.random.default_rng(seed)
    # dyadic values keep 1 - v exact in float32
    vals = rng.integers(0, 257, size=(6, 7, 5)) / 256.0
    g = VoxelGrid.over_bounds(vals, UNIT)
    gc = VoxelGrid.over_bounds(1.0 - vals, UNIT)
    a = marching_cubes(g, iso)
    b = marching_cubes(gc, 1.0 - iso)
    assert a.n_vertices == b.n_vertices and a.n_triangles == b.n_triangles
    if a.n_vertices:
        ka = np.array(sorted(map(tuple, a.vertices)))
        kb = np.array(sorted(map(tuple, b.vertices)))
        assert np.max(np.abs(ka - kb)) <= 1e-12
        # reversed winding flips the signed volume
        assert mesh_volume(a) == pytest.approx(-mesh_volume(b), abs=1e-12)


def test_mc_deterministic():
    g = sphere_grid((20, 20, 20), 0.6)
    a, b = marching_cubes(g), marching_cubes(g)
    assert np.array_equal(a.vertices, b.vertices) and np.array_equal(a.triangles, b.triangles)


# --- voxelize -----------------------------------------------------------------

def test_voxelize_unit_cube_matches_volume():
    cube = box_mesh()
    bounds = Aabb(np.full(3, -0.1), np.full(3, 1.1))
    g = voxelize(cube, (16, 16, 16), bounds)
    h = 1.2 / 16
    count = g.values.sum()
    # analytic volume within one shell of cells
    shell = 6 * (1.0 / h) ** 2
    assert abs(count - 1.0 / h**3) <= shell
    c = g.sample_positions()
    inside = np.all((c > 0) & (c < 1), axis=-1)
    assert np.array_equal(g.values.astype(bool), inside)


def test_voxelize_open_sheet_is_error():
    sheet = TriangleMesh(np.array([[0, 0, 0.5], [1, 0, 0.5], [1, 1, 0.5], [0, 1, 0.5]], float),
                         np.array([[0, 1, 2], [0, 2, 3]]))
    with pytest.raises(InvalidInputError):
        voxelize(sheet, (8, 8, 8), UNIT)


def test_voxelize_empty_is_error():
    with pytest.raises(InvalidInputError):
        voxelize(TriangleMesh.empty(), (8, 8, 8), UNIT)


def _roundtrip(**kw):
    s = icosphere(0.3, 5, (0.5, 0.5, 0.5))
    return s, marching_cubes(voxelize(s, (64, 64, 64), UNIT, **kw))


@pytest.mark.xfail(strict=True, reason="binary 0/1 cells give a terraced iso-surface with ~8.5% extra area; "
                                        "see the decisions ledger")
def test_voxelize_binary_roundtrip_area_within_five_percent():
    s, m = _roundtrip()
    assert mesh_area(m) == pytest.approx(mesh_area(s), rel=0.05)


def test_voxelize_binary_roundtrip_volume_within_five_percent():
    s, m = _roundtrip()
    assert mesh_volume(m) == pytest.approx(mesh_volume(s), rel=0.05)


@pytest.mark.parametrize("kw", [{"supersample": 2}, {"smooth": True}])
def test_voxelize_antialiased_roundtrip_area_within_five_percent(kw):
    s, m = _roundtrip(**kw)
    assert mesh_area(m) == pytest.approx(mesh_area(s), rel=0.05)
    assert mesh_volume(m) == pytest.approx(mesh_volume(s), rel=0.05)


def test_voxelize_smooth_values_in_range_and_saturated_far_away():
    s = icosphere(0.3, 3, (0.5, 0.5, 0.5))
    g = voxelize(s, (24, 24, 24), UNIT, smooth=True)
    assert g.values.min() >= 0 and g.values.max() <= 1
    assert g.values[12, 12, 12] == 1.0 and g.values[0, 0, 0] == 0.0
    with pytest.raises(InvalidInputError):
        voxelize(s, (8, 8, 8), UNIT, supersample=2, smooth=True)


# --- file formats -------------------------------------------------------------

def test_vxg_roundtrip_and_layout(tmp_path):
    g = VoxelGrid(np.random.default_rng(0).random((3, 4, 5)), np.array([0.5, -1, 2]), np.array([0.1, 0.2, 0.3]))
    p = tmp_path / "g.vxg"
    write_vxg(p, g)
    data = p.read_bytes()
    assert data[:4] == b"VXG1" and struct.unpack_from("<I", data, 4)[0] == 1
    assert struct.unpack_from("<3I", data, 16) == (3, 4, 5)
    assert len(data) == 16 + 12 + 48 + 4 * 60
    # values x-fastest as float32 after the header
    vals = np.frombuffer(data, "<f4", offset=16 + 12 + 48)
    assert np.array_equal(vals, g.flat())
    h = read_vxg(p)
    assert h.same_layout(g) and np.array_equal(h.values, g.values)


def test_vxg_bad_magic(tmp_path):
    p = tmp_path / "bad.vxg"
    p.write_bytes(b"NOPE" + bytes(100))
    with pytest.raises(FormatError):
        read_vxg(p)


def test_obj_roundtrip_with_colors_and_landmarks(tmp_path, face):
    p = tmp_path / "f.obj"
    write_obj(p, face)
    back = read_obj(p)
    assert np.array_equal(back.vertices, face.vertices)
    assert np.array_equal(back.triangles, face.triangles)
    assert np.array_equal(back.vertex_colors, face.vertex_colors)
    assert back.landmarks == face.landmarks


def test_landmark_sidecar_roundtrip(tmp_path):
    p = tmp_path / "x.lmk"
    lm = {"eye_outer_left": 3, "eye_outer_right": 7, "nose_tip": 1}
    write_landmarks_file(p, lm)
    assert read_landmarks_file(p) == lm


def test_obj_reader_rejects_garbage(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0\nf 1 2 3\n")
    with pytest.raises(FormatError):
        read_obj(p)


def test_triangle_areas_nonnegative(face):
    assert np.all(triangle_areas(face) >= 0)
