import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from boot3d.errors import DegenerateAlignmentError, InvalidInputError, MissingLandmarkError
from boot3d.geometry.mesh import TriangleMesh, icosphere, mesh_bounds
from boot3d.metrics import (
    EvalPair, NmeReport, NmeRow, build_bvh, closest_point, evaluate_pairs, icp_align, interocular_distance, nme,
    procrustes, proxy_interocular,
)
from boot3d.metrics.report import bucket_of, read_rows_csv
from boot3d.viewgen import RigidTransform, apply_transform

from conftest import random_mesh


def seg_dist(p, a, b):
    ab = b - a
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.einsum("ij,ij->i", ab, ab), 0.0, 1.0)
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=1)


def brute_closest(p, mesh):
    """Distance to every triangle: plane projection when it lands inside,
    else the nearest of the three edges; minimum over all triangles."""
    a, b, c = (mesh.vertices[mesh.triangles[:, k]] for k in range(3))
    p = np.broadcast_to(p, a.shape)
    d = np.minimum(np.minimum(seg_dist(p, a, b), seg_dist(p, b, c)), seg_dist(p, c, a))
    n = np.cross(b - a, c - a)
    nn = np.einsum("ij,ij->i", n, n)
    h = np.einsum("ij,ij->i", p - a, n) / nn
    q = p - h[:, None] * n
    inside = np.ones(len(a), dtype=bool)
    for u, v in ((b, c), (c, a), (a, b)):
        inside &= np.einsum("ij,ij->i", np.cross(u - q, v - q), n) >= 0
    plane = np.abs(h) * np.sqrt(nn)
    d = np.where(inside, np.minimum(d, plane), d)
    return float(d.min())


def grid_plane(n=6, z=0.0, size=1.0, landmarks=True):
    xs = np.linspace(-size, size, n)
    x, y = np.meshgrid(xs, xs, indexing="ij")
    v = np.column_stack([x.ravel(), y.ravel(), np.full(n * n, z)])
    tris = []
    for i in range(n - 1):
        for j in range(n - 1):
            a, b, c, d = i * n + j, (i + 1) * n + j, (i + 1) * n + j + 1, i * n + j + 1
            tris += [[a, b, c], [a, c, d]]
    lm = {"eye_outer_left": n * (n - 1), "eye_outer_right": 0} if landmarks else {}
    return TriangleMesh(v, np.array(tris), landmarks=lm)


# --- closest point ----------------------------------------------------------------

def test_closest_point_on_surface_is_zero():
    s = icosphere(1.0, 2)
    idx = build_bvh(s)
    for v in s.vertices[:20]:
        assert closest_point(v, idx)[1] == pytest.approx(0.0, abs=1e-15)


def test_closest_point_above_large_triangle():
    big = TriangleMesh(np.array([[-100.0, -100, 0], [100, -100, 0], [0, 100, 0]]), np.array([[0, 1, 2]]))
    p, d = closest_point(np.array([0.3, 0.2, 0.7]), build_bvh(big))
    assert d == pytest.approx(0.7, abs=1e-12)
    assert np.allclose(p, [0.3, 0.2, 0.0])


def test_bvh_matches_brute_force_1000_queries(rng):
    mesh = random_mesh(rng, 300, 500)
    idx = build_bvh(mesh)
    q = rng.normal(size=(1000, 3)) * 1.5
    pts, dist = idx.query(q)[:2]
    for i in range(1000):
        assert abs(dist[i] - brute_closest(q[i], mesh)) <= 1e-12


def test_bvh_structure(rng):
    mesh = random_mesh(rng, 200, 400)
    idx = build_bvh(mesh)
    leaves = [k for k in range(len(idx.count)) if idx.count[k] > 0]
    covered = np.concatenate([idx.order[idx.start[k]:idx.start[k] + idx.count[k]] for k in leaves])
    assert sorted(covered) == list(range(mesh.n_triangles))
    assert max(idx.count[k] for k in leaves) <= 8
    for k in range(len(idx.count)):
        for child in (idx.left[k], idx.right[k]):
            if child >= 0:
                assert np.all(idx.node_min[k] <= idx.node_min[child])
                assert np.all(idx.node_max[k] >= idx.node_max[child])


def test_bvh_empty_mesh():
    with pytest.raises(InvalidInputError):
        build_bvh(TriangleMesh.empty())


# --- d and NME --------------------------------------------------------------------

def test_interocular_constructed_and_scaled():
    v = np.array([[-0.3, 0, 0], [0.3, 0, 0], [0, 0.5, 0.1], [0, -0.5, 0.2]])
    m = TriangleMesh(v, np.array([[0, 1, 2], [0, 3, 1]]), landmarks={"eye_outer_left": 1, "eye_outer_right": 0})
    assert interocular_distance(m) == pytest.approx(0.6)
    assert interocular_distance(m.with_vertices(2 * v)) == pytest.approx(1.2)


def test_interocular_missing_landmarks_and_proxy():
    m = icosphere(1.0, 1)
    with pytest.raises(MissingLandmarkError):
        interocular_distance(m)
    ext = mesh_bounds(m).extent[0]
    assert proxy_interocular(m) == pytest.approx(0.4 * ext)


def test_nme_identity_and_offset_plane():
    g = grid_plane()
    assert nme(g, g, 0.5) == 0.0
    p = g.with_vertices(g.vertices + [0, 0, 0.02])
    assert nme(p, g, 1.0) == pytest.approx(0.02, abs=1e-15)


def test_nme_rejects_bad_d():
    g = grid_plane()
    for d in (0.0, -1.0, math.nan):
        with pytest.raises(InvalidInputError):
            nme(g, g, d)


def test_nme_matches_double_loop(rng):
    pred = random_mesh(rng, 300, 100)
    gt = random_mesh(rng, 150, 200)
    want = np.mean([brute_closest(v, gt) for v in pred.vertices]) / 0.7
    assert abs(nme(pred, gt, 0.7) - want) <= 1e-12


@given(st.integers(0, 2**31 - 1))
def test_nme_rigid_invariance_and_scaling(seed):
    rng = np.random.default_rng(seed)
    pred, gt = random_mesh(rng, 40, 30), random_mesh(rng, 40, 30)
    t = RigidTransform(Rotation.random(random_state=seed).as_matrix(), rng.normal(size=3))
    a = nme(pred, gt, 0.3)
    assert nme(apply_transform(pred, t), apply_transform(gt, t), 0.3) == pytest.approx(a, abs=1e-9)
    assert nme(pred, gt, 0.6) == a / 2


# --- ICP --------------------------------------------------------------------------

def test_procrustes_exact_and_degenerate(rng):
    src = rng.normal(size=(50, 3))
    r = Rotation.random(random_state=1).as_matrix()
    t = RigidTransform.identity()
    est = procrustes(src, src @ r.T + [1, 2, 3])
    assert np.allclose(est.rotation, r, atol=1e-12) and np.allclose(est.translation, [1, 2, 3])
    line = np.outer(np.linspace(0, 1, 10), [1.0, 2, 3])
    with pytest.raises(DegenerateAlignmentError):
        procrustes(line, line)
    assert t.is_identity()


def _rot_err(a, b):
    return np.degrees(Rotation.from_matrix(a @ b.T).magnitude())


def test_icp_known_fifteen_degrees(face):
    diag = mesh_bounds(face).diagonal
    r = Rotation.from_rotvec(np.radians(15) * np.array([0.3, 1.0, 0.2]) / np.linalg.norm([0.3, 1.0, 0.2]))
    t_true = RigidTransform(r.as_matrix(), np.array([0.02, -0.03, 0.01]))
    res = icp_align(face, apply_transform(face, t_true))
    assert _rot_err(res.transform.rotation, t_true.rotation) < 0.5
    assert np.linalg.norm(res.transform.translation - t_true.translation) < 1e-3 * diag
    assert res.residual < 1e-6
    assert res.iters <= 50
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))


def test_icp_identity(face):
    res = icp_align(face, face)
    assert np.allclose(res.transform.rotation, np.eye(3), atol=1e-9)
    assert np.allclose(res.transform.translation, 0, atol=1e-9)
    assert res.residual < 1e-12 and res.iters == 1
    t, resid, iters = res
    assert iters == 1


def test_icp_noisy_copy(face):
    diag = mesh_bounds(face).diagonal
    sigma = 1e-3 * diag
    noisy = face.with_vertices(face.vertices + np.random.default_rng(5).normal(scale=sigma, size=face.vertices.shape))
    res = icp_align(noisy, face)
    # noise normal to the surface survives; a factor-2 band around sigma*sqrt(3)
    assert sigma * np.sqrt(3) / 2 <= res.residual * np.sqrt(3) <= 2 * sigma * np.sqrt(3)
    assert _rot_err(res.transform.rotation, np.eye(3)) < 1.0


def test_icp_empty_is_error(face):
    with pytest.raises(InvalidInputError):
        icp_align(TriangleMesh.empty(), face)


# --- reports ----------------------------------------------------------------------

def test_evaluate_identical_pairs():
    g = grid_plane()
    rep = evaluate_pairs([(g, g, 0.0), (g, g, 10.0)], align=False)
    assert np.all(rep.values() == 0) and rep.curve == [(0.0, 1.0)]


def test_evaluate_known_offsets():
    g = grid_plane()
    d = interocular_distance(g)
    pairs = [EvalPair(f"p{k}", g.with_vertices(g.vertices + [0, 0, k * 0.01 * d]), g, 0.0) for k in (1, 2, 3)]
    rep = evaluate_pairs(pairs, align=False)
    assert rep.mean == pytest.approx(0.02, abs=1e-12)
    assert rep.median == pytest.approx(0.02, abs=1e-12)


def test_bucket_populations():
    g = grid_plane()
    rep = evaluate_pairs([(g, g, y) for y in (-25, -15, 5, 5, 44)], align=False)
    pops = {(b.lo, b.hi): b.count for b in rep.buckets}
    assert pops == {(-30, -20): 1, (-20, -10): 1, (0, 10): 2, (40, 50): 1}
    assert sum(pops.values()) == len(rep.rows)
    assert bucket_of(-0.0) == 0 and bucket_of(-0.1) == -10


def test_failed_pairs_become_flagged_rows():
    g = grid_plane()
    bare = grid_plane(landmarks=False)
    rep = evaluate_pairs([EvalPair("a", g, g, 0.0), EvalPair("b", bare, bare, 0.0)], align=False)
    row = {r.id: r for r in rep.rows}["b"]
    assert math.isnan(row.nme) and row.flags == "missing-landmark"
    proxy = evaluate_pairs([EvalPair("b", bare, bare, 0.0)], align=False, d_mode="proxy")
    assert proxy.rows[0].nme == 0.0 and proxy.rows[0].flags == "proxy-d"


@given(st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=40))
def test_curve_monotone(vals):
    rep = NmeReport([NmeRow(f"{i:03d}", 0.0, 0.0, v, False) for i, v in enumerate(vals)])
    thr = [t for t, _ in rep.curve]
    frac = [f for _, f in rep.curve]
    assert thr == sorted(thr) and frac == sorted(frac)
    assert 0 < frac[0] and frac[-1] == 1.0


def test_report_files_roundtrip(tmp_path):
    rows = [NmeRow("b", 20.0, 0.0, 0.02, True), NmeRow("a", -10.0, 10.0, 0.01, True, "proxy-d"),
            NmeRow("c", 5.0, 0.0, math.nan, False, "degenerate-input")]
    rep = NmeReport(rows)
    paths = rep.write_all(tmp_path)
    back = read_rows_csv(paths[0])
    assert [r.id for r in back] == ["a", "b", "c"]
    for x, y in zip(back, rep.rows):
        assert x.id == y.id and x.flags == y.flags and x.aligned == y.aligned
        assert (math.isnan(x.nme) and math.isnan(y.nme)) or x.nme == y.nme
    svg = paths[2].read_text()
    assert svg.startswith("<svg") and "<!-- data" in svg and "-10,1.0" in svg
    assert "<!-- data" in paths[3].read_text()
