import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from boot3d.errors import FormatError, InvalidConfigError, InvalidInputError
from boot3d.geometry.mesh import Aabb, TriangleMesh, icosphere, mesh_bounds
from boot3d.pose import FaceFrame, estimate_face_frame
from boot3d.recon.synthetic import shade
from boot3d.render import (
    Camera, Image, depth_to_grid, make_backplane, project_colors, rasterize, read_image, read_ppm,
    render_sweep, write_image, write_ppm,
)
from boot3d.viewgen import RigidTransform, apply_transform, build_schedule, explicit_schedule, rot_y


def colored(mesh, rgb):
    m = mesh.copy()
    m.vertex_colors = np.tile(np.asarray(rgb, float), (m.n_vertices, 1))
    return m


def tri(pts, rgb):
    return colored(TriangleMesh(np.asarray(pts, float), np.array([[0, 1, 2]])), rgb)


def gradient(w=64, h=48):
    row = np.linspace(0.0, 1.0, w)
    return Image(np.repeat(np.tile(row, (h, 1))[:, :, None], 3, axis=2))


# --- image and camera -----------------------------------------------------------

def test_image_validation():
    with pytest.raises(InvalidInputError):
        Image(np.zeros((4, 4, 2)))
    with pytest.raises(InvalidInputError):
        Image(np.full((2, 2, 3), np.nan))
    assert Image(np.full((2, 2, 3), 2.0)).pixels.max() == 1.0


def test_camera_validation():
    with pytest.raises(InvalidConfigError):
        rasterize([], Camera(view_rect=(0, 0, 0, 1)))
    with pytest.raises(InvalidConfigError):
        Camera(near=1, far=0).validate()


def test_ppm_roundtrip_is_quantized(tmp_path):
    img = Image(np.random.default_rng(0).random((5, 7, 3)))
    p = tmp_path / "a.ppm"
    write_ppm(p, img)
    back = read_ppm(p)
    assert back.width == 7 and back.height == 5
    assert np.array_equal(back.pixels, img.quantized().pixels)
    write_ppm(p, back)
    assert np.array_equal(read_ppm(p).pixels, back.pixels)


def test_png_roundtrip(tmp_path):
    img = Image(np.random.default_rng(1).random((6, 4, 3))).quantized()
    p = tmp_path / "a.png"
    write_image(p, img)
    assert np.array_equal(read_image(p).pixels, img.pixels)


def test_ppm_bad_magic(tmp_path):
    p = tmp_path / "x.ppm"
    p.write_bytes(b"P3\n1 1\n255\n0 0 0\n")
    with pytest.raises(FormatError):
        read_ppm(p)


# --- project_colors -----------------------------------------------------------

def test_project_colors_uniform(small_camera):
    img = Image.filled(16, 16, (0.4, 0.4, 0.4))
    m = project_colors(icosphere(0.8, 2), img, small_camera)
    assert np.allclose(m.vertex_colors, 0.4)


def test_project_colors_gradient_endpoints(small_camera):
    img = gradient()
    pts = np.array([[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.5, 0.0]])
    m = project_colors(TriangleMesh(pts, np.array([[0, 1, 2]])), img, small_camera)
    assert m.vertex_colors[0, 0] == pytest.approx(0.0, abs=1 / 255)
    assert m.vertex_colors[1, 0] == pytest.approx(1.0, abs=1 / 255)


def test_project_colors_centre_pixel(small_camera):
    pix = np.zeros((5, 5, 3))
    pix[2, 2] = [0.9, 0.2, 0.1]
    m = project_colors(TriangleMesh(np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]), np.array([[0, 1, 2]])),
                       Image(pix), small_camera)
    assert np.allclose(m.vertex_colors[0], [0.9, 0.2, 0.1])


# --- rasterize ----------------------------------------------------------------

def test_full_viewport_triangle_is_red(small_camera):
    t = tri([[-3, -3, 0], [6, -3, 0], [-3, 6, 0]], (1, 0, 0))
    v = rasterize([t], small_camera)
    assert np.all(v.coverage)
    assert np.allclose(v.image.pixels, [1.0, 0, 0], rtol=0, atol=1e-12)


def test_nearer_triangle_wins(small_camera):
    far = tri([[-1, -1, -0.5], [1, -1, -0.5], [0, 1, -0.5]], (0, 0, 1))
    near = tri([[-1, 1, 0.5], [1, 1, 0.5], [0, -1, 0.5]], (0, 1, 0))
    for order in ([far, near], [near, far]):
        v = rasterize(order, small_camera)
        both = rasterize([far], small_camera).coverage & rasterize([near], small_camera).coverage
        assert both.any()
        assert np.allclose(v.image.pixels[both], [0, 1, 0])
        assert np.allclose(v.depth[both], -0.5)


def test_sphere_silhouette_area():
    cam = Camera(image_size=(256, 256))
    r = 0.6
    v = rasterize([colored(icosphere(r, 4), (1, 1, 1))], cam)
    frac = v.coverage.mean()
    assert frac == pytest.approx(np.pi * r * r / 4.0, rel=0.02)


def test_silhouette_stable_under_resolution():
    m = colored(icosphere(0.55, 3), (1, 1, 1))
    lo = rasterize([m], Camera(image_size=(64, 64))).coverage.mean()
    hi = rasterize([m], Camera(image_size=(128, 128))).coverage
    hi_down = hi.reshape(64, 2, 64, 2).mean(axis=(1, 3)).mean()
    assert abs(lo - hi_down) < 0.01


def test_shared_edge_pixels_drawn_once():
    # a quad split along its diagonal; each pixel is owned by exactly one triangle
    cam = Camera(image_size=(16, 16))
    v = np.array([[-0.75, -0.75, 0], [0.75, -0.75, 0], [0.75, 0.75, 0], [-0.75, 0.75, 0]], float)
    a = colored(TriangleMesh(v, np.array([[0, 1, 2]])), (1, 0, 0))
    b = colored(TriangleMesh(v, np.array([[0, 2, 3]])), (0, 1, 0))
    ca, cb = rasterize([a], cam).coverage, rasterize([b], cam).coverage
    assert not np.any(ca & cb)
    assert np.array_equal(ca | cb, rasterize([a, b], cam).coverage)


def _brute_depth(meshes, cam):
    w, h = cam.image_size
    out = np.full((h, w), np.inf)
    for m in meshes:
        pix = cam.to_pixels(m.vertices)
        dep = -m.vertices[:, 2]
        for t in m.triangles:
            (ax, ay), (bx, by), (cx, cy) = pix[t]
            area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
            if area == 0:
                continue
            for r in range(h):
                for c in range(w):
                    px, py = c + 0.5, r + 0.5
                    wa = ((bx - px) * (cy - py) - (by - py) * (cx - px)) / area
                    wb = ((cx - px) * (ay - py) - (cy - py) * (ax - px)) / area
                    wc = 1 - wa - wb
                    if min(wa, wb, wc) > 0:
                        out[r, c] = min(out[r, c], wa * dep[t[0]] + wb * dep[t[1]] + wc * dep[t[2]])
    return out


@given(st.integers(0, 2**31 - 1))
def test_depth_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    cam = Camera(image_size=(24, 20))
    meshes = [tri(rng.uniform(-1.2, 1.2, size=(3, 3)), rng.random(3)) for _ in range(4)]
    v = rasterize(meshes, cam)
    want = _brute_depth(meshes, cam)
    # pixel centres exactly on an edge have probability zero for random vertices
    assert np.array_equal(np.isfinite(v.depth), np.isfinite(want))
    fin = np.isfinite(want)
    assert np.allclose(v.depth[fin], want[fin], atol=1e-12)


def test_rasterize_deterministic(face, camera):
    m = shade(face)
    a, b = rasterize([m], camera), rasterize([m], camera)
    assert np.array_equal(a.image.pixels, b.image.pixels) and np.array_equal(a.depth, b.depth)


def test_rasterize_needs_colors(small_camera):
    with pytest.raises(InvalidInputError):
        rasterize([icosphere(0.5, 1)], small_camera)


# --- backplane and sweeps -------------------------------------------------------

def test_frontal_backplane_fills_viewport(face, camera):
    src = gradient(128, 128)
    bp = make_backplane(FaceFrame.canonical(), mesh_bounds(face), src, camera)
    assert np.allclose(bp.face_normals()[:, :2], 0, atol=1e-12)
    v = rasterize([bp], camera)
    assert np.all(v.coverage)
    assert np.allclose(v.image.pixels, src.pixels, atol=1 / 255)


def test_backplane_behind_every_vertex(face, camera):
    f = estimate_face_frame(face)
    bp = make_backplane(f, mesh_bounds(face), gradient(), camera)
    deepest = ((face.vertices - f.centroid) @ f.gaze).min()
    assert np.all((bp.vertices - f.centroid) @ f.gaze <= deepest - 1e-6)


def test_background_static_under_face_yaw(face, camera):
    src = gradient(128, 128)
    f = estimate_face_frame(face)
    bp = make_backplane(f, mesh_bounds(face), src, camera)
    m = shade(face)
    a = rasterize([m, bp], camera)
    moved = apply_transform(m, RigidTransform.about(rot_y(40.0), f.centroid))
    b = rasterize([moved, bp], camera)
    outside = ~rasterize([m], camera).coverage & ~rasterize([moved], camera).coverage
    assert outside.sum() > 1000
    assert np.array_equal(a.image.pixels[outside], b.image.pixels[outside])


def test_render_sweep_empty(face, camera):
    f = estimate_face_frame(face)
    assert render_sweep(shade(face), f, gradient(), explicit_schedule(f, []), camera) == []


def test_render_sweep_mirror_silhouettes(face, camera):
    f = estimate_face_frame(face)
    sched = build_schedule(f, 10, 0, 90, yaw_set=[-20, 20])
    views = render_sweep(shade(face), f, gradient(), sched, camera, backplane=TriangleMesh.empty())
    left, right = views[0].coverage, views[1].coverage
    assert np.mean(left != right[:, ::-1]) < 0.01


def test_render_sweep_yaw_zero_identity(face, camera):
    f = estimate_face_frame(face)
    src = gradient(128, 128)
    m = shade(face)
    bp = make_backplane(f, mesh_bounds(m), src, camera)
    view = render_sweep(m, f, src, explicit_schedule(f, [(0, 0)]), camera)[0]
    direct = rasterize([m, bp], camera)
    assert np.array_equal(view.image.pixels, direct.image.pixels)
    assert np.array_equal(view.depth, direct.depth)


def test_depth_to_grid_single_slice(small_camera):
    v = rasterize([tri([[-3, -3, 0.5], [6, -3, 0.5], [-3, 6, 0.5]], (1, 1, 1))], small_camera)
    g = depth_to_grid(v, small_camera)
    assert g.dims == (32, 32, 1)
    assert np.allclose(g.values, (-0.5 - small_camera.near) / (small_camera.far - small_camera.near))
