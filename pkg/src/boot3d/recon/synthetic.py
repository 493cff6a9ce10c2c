"""Procedural mask-like faces with exact bilateral symmetry.

A face is a closed, shallow solid: a relief front surface (brow, eye
sockets, nose, lips) and a gently domed back, joined at an elliptical rim.
Canonical frame: lateral = +x (toward the subject's left eye), vertical = +y,
gaze = +z. Every vertex with x != 0 has a mirror partner with identical
(y, z) and negated x, so the plane x = 0 is an exact symmetry plane.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import InvalidInputError
from ..geometry.mesh import TriangleMesh

# name -> (low, high); sampled uniformly per seed
PARAM_RANGES = {
    "width": (0.48, 0.58),       # half-width of the rim
    "height": (0.62, 0.74),      # half-height of the rim
    "depth": (0.26, 0.34),       # front relief depth at the centre
    "back_depth": (0.06, 0.12),
    "taper": (0.08, 0.22),       # forehead wider than chin
    "nose_length": (0.22, 0.32),
    "nose_width": (0.06, 0.10),
    "nose_height": (0.08, 0.14),
    "eye_offset": (0.15, 0.21),  # eye-centre distance from the midline
    "eye_depth": (0.02, 0.05),
    "brow_depth": (0.02, 0.05),
}


@dataclass(frozen=True)
class SyntheticFaceSpec:
    seed: int = 0
    width: float = 0.53
    height: float = 0.68
    depth: float = 0.30
    back_depth: float = 0.09
    taper: float = 0.15
    nose_length: float = 0.27
    nose_width: float = 0.08
    nose_height: float = 0.11
    eye_offset: float = 0.18
    eye_depth: float = 0.035
    brow_depth: float = 0.035
    rings: int = 36
    back_rings: int = 10
    segments: int = 112

    @classmethod
    def random(cls, seed: int, **overrides) -> SyntheticFaceSpec:
        rng = np.random.default_rng(seed)
        params = {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in PARAM_RANGES.items()}
        params.update(overrides)
        return cls(seed=seed, **params)

    def validate(self) -> None:
        for name, (lo, hi) in PARAM_RANGES.items():
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise InvalidInputError(f"face parameter {name}={v} outside [{lo}, {hi}]")
        if self.rings < 4 or self.back_rings < 2 or self.segments < 8 or self.segments % 4:
            raise InvalidInputError("rings >= 4, back_rings >= 2, segments a multiple of 4 >= 8")

    def as_dict(self) -> dict:
        return asdict(self)


def _gauss(d2, s):
    return np.exp(-d2 / (2.0 * s * s))


def _front_relief(ax, y, r2, spec: SyntheticFaceSpec, rng_colors):
    """Front z and albedo as even functions of x (``ax`` is |x|)."""
    base = spec.depth * np.sqrt(np.clip(1.0 - r2, 0.0, None))
    eye_y = 0.18 * spec.height
    brow_y = eye_y + 0.13 * spec.height
    nose_top = eye_y - 0.02
    nose_tip_y = nose_top - spec.nose_length
    mouth_y = nose_tip_y - 0.12 * spec.height

    z = base.copy()
    z -= spec.eye_depth * _gauss((ax - spec.eye_offset) ** 2 + (y - eye_y) ** 2, 0.06)
    z += spec.brow_depth * _gauss((y - brow_y) ** 2, 0.035) * _gauss(ax ** 2, 0.22)
    # nose: ridge growing toward the tip, clipped above the bridge
    t = np.clip((nose_top - y) / spec.nose_length, 0.0, 1.15)
    ridge = spec.nose_height * (0.35 + 0.65 * t) * _gauss(ax ** 2, spec.nose_width * (0.6 + 0.6 * t))
    ridge *= np.where(y > nose_top, _gauss((y - nose_top) ** 2, 0.05), 1.0)
    ridge *= np.where(y < nose_tip_y, _gauss((y - nose_tip_y) ** 2, 0.035), 1.0)
    z += ridge
    z += 0.02 * _gauss(ax ** 2 + (y - mouth_y) ** 2, 0.05)

    skin = np.array([0.86, 0.66, 0.54]) * rng_colors
    col = np.tile(skin, (len(ax), 1))
    iris = _gauss((ax - spec.eye_offset) ** 2 + (y - eye_y) ** 2, 0.03)
    brow = _gauss((y - brow_y) ** 2, 0.018) * (ax > 0.05) * (ax < spec.eye_offset + 0.12)
    lips = _gauss(ax ** 2 / 2.5 + (y - mouth_y) ** 2, 0.025)
    col = col * (1 - iris[:, None]) + np.array([0.12, 0.08, 0.06]) * iris[:, None]
    col = col * (1 - 0.8 * brow[:, None]) + np.array([0.25, 0.16, 0.1]) * 0.8 * brow[:, None]
    col = col * (1 - lips[:, None]) + np.array([0.72, 0.3, 0.3]) * lips[:, None]
    return z, col, (eye_y, nose_tip_y)


def generate_synthetic_face(spec: SyntheticFaceSpec) -> TriangleMesh:
    """Closed, shallow, mirror-symmetric face mesh with landmarks and colors."""
    spec.validate()
    n_seg, n_f, n_b = spec.segments, spec.rings, spec.back_rings
    phi = 2.0 * np.pi * np.arange(n_seg) / n_seg
    mirror = (n_seg // 2 - np.arange(n_seg)) % n_seg
    c = np.cos(phi)
    s = np.sin(phi)
    c = 0.5 * (c - c[mirror])
    s = 0.5 * (s + s[mirror])

    rng = np.random.default_rng(spec.seed + 7919)
    tint = rng.uniform(0.85, 1.1, size=3)

    # rings 1..n_f on the front; ring n_f is the shared rim
    rf = (np.arange(1, n_f + 1) / n_f) ** 0.8
    rb = (np.arange(1, n_b) / n_b) ** 0.8

    def ring_xy(r):
        y = spec.height * np.outer(r, s)
        widen = 1.0 + spec.taper * (y / spec.height)
        x = spec.width * np.outer(r, c) * widen
        return x, y, np.outer(r * r, np.ones(n_seg))

    fx, fy, fr2 = ring_xy(rf)
    fz, fcol, (eye_y, nose_tip_y) = _front_relief(np.abs(fx).ravel(), fy.ravel(), fr2.ravel(), spec, tint)
    fz = fz.reshape(fx.shape)
    fcol = fcol.reshape(fx.shape + (3,))
    fz[-1] = 0.0

    bx, by, br2 = ring_xy(rb)
    bz = -spec.back_depth * np.sqrt(np.clip(1.0 - br2, 0.0, None))
    hair = np.array([0.22, 0.16, 0.11]) * tint

    cf_z, cf_col, _ = _front_relief(np.zeros(1), np.zeros(1), np.zeros(1), spec, tint)
    verts = [np.array([[0.0, 0.0, cf_z[0]]])]
    cols = [cf_col]
    # front rings (index 1 ..), then back rings, then back centre
    verts.append(np.stack([fx, fy, fz], axis=-1).reshape(-1, 3))
    cols.append(fcol.reshape(-1, 3))
    verts.append(np.stack([bx, by, bz], axis=-1).reshape(-1, 3))
    cols.append(np.tile(hair, (bx.size, 1)))
    verts.append(np.array([[0.0, 0.0, -spec.back_depth]]))
    cols.append(hair[None])
    v = np.concatenate(verts)
    col = np.concatenate(cols)

    def fidx(ring, k):  # front ring 0..n_f-1
        return 1 + ring * n_seg + (k % n_seg)

    def bidx(ring, k):  # back ring 0..n_b-2; ring n_b-1 is the rim
        if ring == n_b - 1:
            return fidx(n_f - 1, k)
        return 1 + n_f * n_seg + ring * n_seg + (k % n_seg)

    back_centre = len(v) - 1
    tris = []
    for k in range(n_seg):
        tris.append((0, fidx(0, k), fidx(0, k + 1)))
        for ring in range(n_f - 1):
            a, b = fidx(ring, k), fidx(ring, k + 1)
            cc, d = fidx(ring + 1, k), fidx(ring + 1, k + 1)
            tris += [(a, cc, d), (a, d, b)]
        tris.append((back_centre, bidx(0, k + 1), bidx(0, k)))
        for ring in range(n_b - 1):
            a, b = bidx(ring, k), bidx(ring, k + 1)
            cc, d = bidx(ring + 1, k), bidx(ring + 1, k + 1)
            tris += [(a, d, cc), (a, b, d)]
    tris = np.array(tris, dtype=np.int64)

    # centre the solid and align its y-z principal axes with the canonical frame;
    # x is left untouched so x = 0 stays the exact symmetry plane
    yz = v[:, 1:]
    yz = yz - yz.mean(axis=0)
    cov = yz.T @ yz
    ang = 0.5 * np.arctan2(2.0 * cov[0, 1], cov[0, 0] - cov[1, 1])
    ca, sa = np.cos(ang), np.sin(ang)
    rot = np.array([[ca, sa], [-sa, ca]])
    v = np.column_stack([v[:, 0], yz @ rot.T])

    front = np.arange(1, 1 + n_f * n_seg)
    fv = v[front]
    nose = front[np.argmax(np.where(np.abs(fv[:, 0]) < 1e-12, fv[:, 2], -np.inf))]
    eye_y_now = v[front][np.argmin(np.abs(fy.ravel() - eye_y) + np.abs(np.abs(fx.ravel()) - spec.eye_offset))][1]
    outer = spec.eye_offset + 0.08
    cand = np.argmin((fv[:, 0] - outer) ** 2 + (fv[:, 1] - eye_y_now) ** 2)
    left = front[cand]
    ring, k = divmod(int(left) - 1, n_seg)
    right = 1 + ring * n_seg + int(mirror[k])
    mesh = TriangleMesh(v, tris, col, {"eye_outer_left": int(left), "eye_outer_right": int(right),
                                       "nose_tip": int(nose)})
    return mesh


def canonical_frame_axes() -> np.ndarray:
    return np.eye(3)


def vertex_normals(mesh: TriangleMesh) -> np.ndarray:
    fn = mesh.face_normals(normalize=False)
    n = np.zeros_like(mesh.vertices)
    for k in range(3):
        np.add.at(n, mesh.triangles[:, k], fn)
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    return n / np.where(norm > 0, norm, 1.0)


def shade(mesh: TriangleMesh, light=(0.0, 0.0, 1.0), ambient: float = 0.35) -> TriangleMesh:
    """Bake Lambert shading from a directional light into the vertex colors."""
    light = np.asarray(light, dtype=np.float64)
    light = light / np.linalg.norm(light)
    lam = np.clip(vertex_normals(mesh) @ light, 0.0, 1.0)
    out = mesh.copy()
    base = mesh.vertex_colors if mesh.vertex_colors is not None else np.full((mesh.n_vertices, 3), 0.8)
    out.vertex_colors = np.clip(base * (ambient + (1.0 - ambient) * lam)[:, None], 0.0, 1.0)
    return out


def background_image(seed: int, width: int, height: int) -> np.ndarray:
    """Smooth low-contrast backdrop, deterministic per seed."""
    rng = np.random.default_rng(seed + 104729)
    base = rng.uniform(0.25, 0.6, size=3)
    tilt = rng.uniform(-0.12, 0.12, size=(2, 3))
    u = (np.arange(width) + 0.5) / width - 0.5
    v = (np.arange(height) + 0.5) / height - 0.5
    img = base + u[None, :, None] * tilt[0] + v[:, None, None] * tilt[1]
    return np.clip(img, 0.0, 1.0)


def head_mesh(face: TriangleMesh, subdivisions: int = 3) -> TriangleMesh:
    """Ellipsoidal head behind a canonical-frame face mask, for photos only.

    The ellipsoid is about as wide as the mask and deep like a skull, and its
    centre sits behind the mask so its front stays under the front relief.
    It is skin-colored with hair over the crown and the back.
    """
    from ..geometry.mesh import icosphere

    v = face.vertices
    half_w = float(np.abs(v[:, 0]).max())
    half_h = float(np.abs(v[:, 1]).max())
    zc = float(v[:, 2].min()) - 0.07
    front = float(v[:, 2].max())
    radii = np.array([1.04 * half_w, 1.06 * half_h, 0.8 * (front - zc)])
    unit = icosphere(1.0, subdivisions)
    verts = unit.vertices * radii + np.array([0.0, 0.02, zc])
    skin = (face.vertex_colors[0] if face.vertex_colors is not None else np.array([0.86, 0.66, 0.54])) * 0.93
    hair = np.array([0.2, 0.14, 0.1])
    u = unit.vertices
    is_hair = (u[:, 1] > 0.55) | (u[:, 2] < -0.2)
    col = np.where(is_hair[:, None], hair, skin)
    return TriangleMesh(verts, unit.triangles, col)


def face_photo(face: TriangleMesh, camera, background_seed: int = 0, transform=None, head: bool = True,
               light=(0.0, 0.0, 1.0)):
    """Shaded emissive render of a canonical-frame face, optionally posed by
    ``transform``, in front of its head and a smooth backdrop."""
    from ..render import Image, rasterize
    from ..viewgen import apply_transform

    scene = [face] + ([head_mesh(face)] if head else [])
    if transform is not None:
        scene = [apply_transform(m, transform) for m in scene]
    w, h = camera.image_size
    view = rasterize([shade(m, light) for m in scene], camera)
    bg = background_image(background_seed, w, h)
    pix = np.where(view.coverage[:, :, None], view.image.pixels, bg)
    return Image(pix)
