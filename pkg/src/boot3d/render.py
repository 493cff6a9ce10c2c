"""Orthographic software rasterizer with emissive shading.

Surfaces emit their per-vertex color (barycentric interpolation) or, for
textured meshes, the bilinearly sampled texture; nothing is lit. The camera
looks down -z, so the recorded depth of a fragment is ``-z`` and smaller is
nearer.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .errors import FormatError, InvalidConfigError, InvalidInputError
from .geometry.grid import VoxelGrid
from .geometry.mesh import Aabb, TriangleMesh, mesh_bounds
from .pose import FaceFrame
from .viewgen import RigidTransform, ViewSchedule, apply_transform


@dataclass(eq=False)
class Image:
    """RGB image, ``pixels`` shaped (height, width, 3) with values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float64)
        if p.ndim == 2:
            p = np.repeat(p[:, :, None], 3, axis=2)
        if p.ndim != 3 or p.shape[2] != 3 or p.shape[0] < 1 or p.shape[1] < 1:
            raise InvalidInputError(f"image must be (h, w, 3), got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise InvalidInputError("image has non-finite pixels")
        self.pixels = np.clip(p, 0.0, 1.0)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def quantized(self) -> Image:
        return Image(np.round(self.pixels * 255.0) / 255.0)

    def to_bytes(self) -> bytes:
        return np.round(self.pixels * 255.0).astype(np.uint8).tobytes()

    def grayscale(self) -> np.ndarray:
        return self.pixels @ np.array([0.299, 0.587, 0.114])

    @classmethod
    def filled(cls, width: int, height: int, color=(0.0, 0.0, 0.0)) -> Image:
        return cls(np.tile(np.asarray(color, dtype=np.float64), (height, width, 1)))


@dataclass(frozen=True)
class Camera:
    view_rect: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)
    image_size: tuple[int, int] = (128, 128)
    near: float = -10.0
    far: float = 10.0
    mode: str = "orthographic"

    def validate(self) -> None:
        cx, cy, hw, hh = self.view_rect
        w, h = self.image_size
        if self.mode != "orthographic":
            raise InvalidConfigError(f"unsupported camera mode {self.mode!r}")
        if not (hw > 0 and hh > 0):
            raise InvalidConfigError("camera view_rect must have positive half extents")
        if not (w >= 1 and h >= 1):
            raise InvalidConfigError("camera image size must be positive")
        if not self.near < self.far:
            raise InvalidConfigError("camera near must be < far")

    def to_pixels(self, points: np.ndarray) -> np.ndarray:
        """World (x, y) -> continuous pixel coordinates (column, row)."""
        cx, cy, hw, hh = self.view_rect
        w, h = self.image_size
        p = np.atleast_2d(points)
        col = (p[:, 0] - (cx - hw)) / (2.0 * hw) * w
        row = ((cy + hh) - p[:, 1]) / (2.0 * hh) * h
        return np.column_stack([col, row])

    def pixel_centers(self) -> np.ndarray:
        """World (x, y) of every pixel centre, shape (h, w, 2)."""
        cx, cy, hw, hh = self.view_rect
        w, h = self.image_size
        xs = cx - hw + (np.arange(w) + 0.5) * (2.0 * hw / w)
        ys = cy + hh - (np.arange(h) + 0.5) * (2.0 * hh / h)
        gx, gy = np.meshgrid(xs, ys)
        return np.stack([gx, gy], axis=-1)

    def resized(self, width: int, height: int) -> Camera:
        return Camera(self.view_rect, (width, height), self.near, self.far, self.mode)


@dataclass(eq=False)
class RenderedView:
    image: Image
    depth: np.ndarray
    transform: RigidTransform = field(default_factory=RigidTransform.identity)
    yaw_deg: float = 0.0
    pitch_deg: float = 0.0

    @property
    def coverage(self) -> np.ndarray:
        return np.isfinite(self.depth)


def bilinear_sample(pixels: np.ndarray, col: np.ndarray, row: np.ndarray) -> np.ndarray:
    """Sample at continuous pixel coordinates; pixel centres sit at +0.5, edges clamp."""
    h, w = pixels.shape[:2]
    x = np.clip(np.asarray(col, dtype=np.float64) - 0.5, 0.0, w - 1)
    y = np.clip(np.asarray(row, dtype=np.float64) - 0.5, 0.0, h - 1)
    x0 = np.minimum(np.floor(x).astype(np.int64), w - 1)
    y0 = np.minimum(np.floor(y).astype(np.int64), h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    top = pixels[y0, x0] * (1 - fx) + pixels[y0, x1] * fx
    bot = pixels[y1, x0] * (1 - fx) + pixels[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def project_colors(mesh: TriangleMesh, source_image: Image, camera: Camera) -> TriangleMesh:
    """Color each vertex with the source-image pixel it projects onto."""
    camera.validate()
    src = camera.resized(source_image.width, source_image.height)
    pix = src.to_pixels(mesh.vertices)
    colors = bilinear_sample(source_image.pixels, pix[:, 0], pix[:, 1])
    out = mesh.copy()
    out.vertex_colors = np.clip(colors, 0.0, 1.0)
    return out


def make_backplane(frame: FaceFrame, mesh_bounds: Aabb, source_image: Image, camera: Camera,
                   margin: float = 1e-3) -> TriangleMesh:
    """Textured quad behind the face carrying ``source_image``.

    The plane has normal ``frame.gaze`` and sits behind the bounding sphere of
    ``mesh_bounds`` around the centroid, so the face can rotate about its
    centroid without crossing it. Its corners lie on the camera rays through
    the view-rect corners, so the quad exactly fills the viewport and the
    texture maps one-to-one onto the image. A gaze nearly perpendicular to
    the camera axis falls back to a plane facing the camera.
    """
    camera.validate()
    n = np.asarray(frame.gaze, dtype=np.float64)
    if n[2] < 0.2:
        n = np.array([0.0, 0.0, 1.0])
    c = np.asarray(frame.centroid, dtype=np.float64)
    corners = np.array([[mesh_bounds.min[0] if (k & 1) == 0 else mesh_bounds.max[0],
                         mesh_bounds.min[1] if (k & 2) == 0 else mesh_bounds.max[1],
                         mesh_bounds.min[2] if (k & 4) == 0 else mesh_bounds.max[2]] for k in range(8)])
    radius = float(np.linalg.norm(corners - c, axis=1).max())
    p0 = c - n * (radius + margin + 1e-6)
    cx, cy, hw, hh = camera.view_rect
    xy = np.array([[cx - hw, cy + hh], [cx + hw, cy + hh], [cx + hw, cy - hh], [cx - hw, cy - hh]])
    z = p0[2] - (n[0] * (xy[:, 0] - p0[0]) + n[1] * (xy[:, 1] - p0[1])) / n[2]
    verts = np.column_stack([xy, z])
    uvs = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    quad = TriangleMesh(verts, np.array([[0, 3, 2], [0, 2, 1]]), uvs=uvs, texture=source_image)
    return project_colors(quad, source_image, camera)


@numba.njit(cache=True)
def _owns(px, py, ax, ay, bx, by):
    w = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    if w > 0:
        return True
    if w < 0:
        return False
    # shared edges belong to exactly one of the two triangles
    dy = by - ay
    return dy > 0 or (dy == 0 and (bx - ax) < 0)


@numba.njit(cache=True)
def _raster(scr, dep, col, uv, tex_id, tex, width, height, near, far, img, zbuf):
    th, tw = tex.shape[0], tex.shape[1]
    for t in range(scr.shape[0]):
        ax, ay = scr[t, 0, 0], scr[t, 0, 1]
        bx, by = scr[t, 1, 0], scr[t, 1, 1]
        cx, cy = scr[t, 2, 0], scr[t, 2, 1]
        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area == 0.0:
            continue
        i1, i2 = 1, 2
        if area < 0:
            bx, by, cx, cy = cx, cy, bx, by
            i1, i2 = 2, 1
            area = -area
        x0 = max(0, int(np.floor(min(ax, bx, cx) - 0.5)))
        x1 = min(width - 1, int(np.ceil(max(ax, bx, cx) - 0.5)))
        y0 = max(0, int(np.floor(min(ay, by, cy) - 0.5)))
        y1 = min(height - 1, int(np.ceil(max(ay, by, cy) - 0.5)))
        for py_ in range(y0, y1 + 1):
            py = py_ + 0.5
            for px_ in range(x0, x1 + 1):
                px = px_ + 0.5
                if not _owns(px, py, bx, by, cx, cy):
                    continue
                if not _owns(px, py, cx, cy, ax, ay):
                    continue
                if not _owns(px, py, ax, ay, bx, by):
                    continue
                wa = ((bx - px) * (cy - py) - (by - py) * (cx - px)) / area
                wb = ((cx - px) * (ay - py) - (cy - py) * (ax - px)) / area
                wc = 1.0 - wa - wb
                d = wa * dep[t, 0] + wb * dep[t, i1] + wc * dep[t, i2]
                if d < near or d > far or d >= zbuf[py_, px_]:
                    continue
                zbuf[py_, px_] = d
                if tex_id[t] >= 0:
                    u = wa * uv[t, 0, 0] + wb * uv[t, i1, 0] + wc * uv[t, i2, 0]
                    v = wa * uv[t, 0, 1] + wb * uv[t, i1, 1] + wc * uv[t, i2, 1]
                    sx = min(max(u * tw - 0.5, 0.0), tw - 1.0)
                    sy = min(max(v * th - 0.5, 0.0), th - 1.0)
                    ix = min(int(np.floor(sx)), tw - 1)
                    iy = min(int(np.floor(sy)), th - 1)
                    jx = min(ix + 1, tw - 1)
                    jy = min(iy + 1, th - 1)
                    fx = sx - ix
                    fy = sy - iy
                    for ch in range(3):
                        top = tex[iy, ix, ch] * (1 - fx) + tex[iy, jx, ch] * fx
                        bot = tex[jy, ix, ch] * (1 - fx) + tex[jy, jx, ch] * fx
                        img[py_, px_, ch] = top * (1 - fy) + bot * fy
                else:
                    for ch in range(3):
                        img[py_, px_, ch] = wa * col[t, 0, ch] + wb * col[t, i1, ch] + wc * col[t, i2, ch]


def rasterize(scene: list[TriangleMesh], camera: Camera, background=(0.0, 0.0, 0.0)) -> RenderedView:
    """Z-buffered rasterization of ``scene`` sampled at pixel centres."""
    camera.validate()
    width, height = camera.image_size
    texture = None
    scr, dep, col, uv, tid = [], [], [], [], []
    for mesh in scene:
        if mesh.n_triangles == 0:
            continue
        textured = mesh.uvs is not None and mesh.texture is not None
        if not textured and mesh.vertex_colors is None:
            raise InvalidInputError("every scene mesh needs vertex colors or a texture")
        if textured:
            if texture is not None and mesh.texture is not texture:
                raise InvalidInputError("at most one texture per scene")
            texture = mesh.texture
        pix = camera.to_pixels(mesh.vertices)
        scr.append(pix[mesh.triangles])
        dep.append(-mesh.vertices[:, 2][mesh.triangles])
        colors = mesh.vertex_colors if mesh.vertex_colors is not None else np.zeros((mesh.n_vertices, 3))
        col.append(colors[mesh.triangles])
        uvs = mesh.uvs if textured else np.zeros((mesh.n_vertices, 2))
        uv.append(uvs[mesh.triangles])
        tid.append(np.full(mesh.n_triangles, 0 if textured else -1, dtype=np.int64))
    img = np.empty((height, width, 3), dtype=np.float64)
    img[:] = np.asarray(background, dtype=np.float64)
    zbuf = np.full((height, width), np.inf)
    if scr:
        tex = texture.pixels if texture is not None else np.zeros((1, 1, 3))
        _raster(np.concatenate(scr), np.concatenate(dep), np.concatenate(col), np.concatenate(uv),
                np.concatenate(tid), np.ascontiguousarray(tex), width, height,
                float(camera.near), float(camera.far), img, zbuf)
    return RenderedView(Image(img), zbuf)


def render_sweep(mesh: TriangleMesh, frame: FaceFrame, source_image: Image, schedule: ViewSchedule,
                 camera: Camera, backplane: TriangleMesh | None = None) -> list[RenderedView]:
    """Render ``mesh`` at every schedule view in front of a static backplane."""
    if backplane is None:
        backplane = make_backplane(frame, mesh_bounds(mesh), source_image, camera)
    views = []
    for entry in schedule:
        moved = apply_transform(mesh, entry.transform)
        view = rasterize([moved, backplane], camera)
        view.transform = entry.transform
        view.yaw_deg = entry.yaw_deg
        view.pitch_deg = entry.pitch_deg
        views.append(view)
    return views


def write_ppm(path, image: Image) -> None:
    header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + image.to_bytes())


def read_ppm(path) -> Image:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PPM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P6":
        raise FormatError(f"{path}: not a binary PPM (P6)")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 is supported")
    pos += 1
    raw = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    if raw.size != w * h * 3:
        raise FormatError(f"{path}: truncated pixel data")
    return Image(raw.reshape(h, w, 3) / 255.0)


def write_image(path, image: Image) -> None:
    if Path(path).suffix.lower() == ".png":
        from PIL import Image as PilImage
        PilImage.fromarray(np.round(image.pixels * 255).astype(np.uint8)).save(path)
    else:
        write_ppm(path, image)


def read_image(path) -> Image:
    if Path(path).suffix.lower() == ".png":
        from PIL import Image as PilImage
        with PilImage.open(path) as im:
            return Image(np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0)
    return read_ppm(path)


def depth_to_grid(view: RenderedView, camera: Camera) -> VoxelGrid:
    """Depth buffer as a one-slice grid; depth maps linearly from [near, far]
    to [0, 1] and uncovered pixels store 1."""
    d = np.where(np.isfinite(view.depth), (view.depth - camera.near) / (camera.far - camera.near), 1.0)
    cx, cy, hw, hh = camera.view_rect
    w, h = camera.image_size
    # x = column, y = row from the top
    vals = d.T[:, :, None]
    return VoxelGrid(vals, (cx - hw, cy - hh, 0.0), (2 * hw / w, 2 * hh / h, 1.0))
