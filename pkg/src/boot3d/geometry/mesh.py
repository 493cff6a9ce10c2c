from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from ..errors import InvalidInputError

LANDMARK_NAMES = ("eye_outer_left", "eye_outer_right", "nose_tip")


@dataclass(frozen=True)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=np.float64).reshape(3)
        hi = np.asarray(self.max, dtype=np.float64).reshape(3)
        if np.any(lo > hi):
            raise InvalidInputError(f"aabb min {lo} exceeds max {hi}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @property
    def extent(self) -> np.ndarray:
        return self.max - self.min

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extent))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min + self.max)

    def expanded(self, margin: float) -> Aabb:
        return Aabb(self.min - margin, self.max + margin)

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.all((points >= self.min) & (points <= self.max), axis=1)

    @classmethod
    def cube(cls, half: float, center=(0.0, 0.0, 0.0)) -> Aabb:
        c = np.asarray(center, dtype=np.float64)
        return cls(c - half, c + half)


@dataclass(eq=False)
class TriangleMesh:
    """Indexed triangle surface.

    ``uvs``/``texture`` are optional; when both are present the rasterizer
    emits the bilinearly sampled texture instead of the vertex colors.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    vertex_colors: np.ndarray | None = None
    landmarks: dict[str, int] = field(default_factory=dict)
    uvs: np.ndarray | None = None
    texture: Any = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("mesh has non-finite vertex coordinates")
        if t.size:
            if t.min() < 0 or t.max() >= len(v):
                raise InvalidInputError("triangle index out of range")
            if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
                raise InvalidInputError("degenerate triangle with repeated index")
        self.vertices = v
        self.triangles = t
        if self.vertex_colors is not None:
            c = np.asarray(self.vertex_colors, dtype=np.float64).reshape(-1, 3)
            if len(c) != len(v):
                raise InvalidInputError("vertex_colors length differs from vertex count")
            if not np.all(np.isfinite(c)):
                raise InvalidInputError("non-finite vertex colors")
            self.vertex_colors = np.clip(c, 0.0, 1.0)
        if self.uvs is not None:
            uv = np.asarray(self.uvs, dtype=np.float64).reshape(-1, 2)
            if len(uv) != len(v):
                raise InvalidInputError("uvs length differs from vertex count")
            self.uvs = uv
        lm = {}
        for name, idx in dict(self.landmarks).items():
            idx = int(idx)
            if not 0 <= idx < len(v):
                raise InvalidInputError(f"landmark {name!r} index {idx} out of range")
            lm[str(name)] = idx
        self.landmarks = lm

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def is_empty(self) -> bool:
        return self.n_triangles == 0

    def corners(self) -> np.ndarray:
        """Triangle corner positions, shape (m, 3, 3)."""
        return self.vertices[self.triangles]

    def face_normals(self, normalize: bool = True) -> np.ndarray:
        c = self.corners()
        n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        if normalize:
            norm = np.linalg.norm(n, axis=1, keepdims=True)
            n = n / np.where(norm > 0, norm, 1.0)
        return n

    def with_vertices(self, vertices: np.ndarray) -> TriangleMesh:
        return replace(self, vertices=vertices, landmarks=dict(self.landmarks))

    def copy(self) -> TriangleMesh:
        return TriangleMesh(
            self.vertices.copy(),
            self.triangles.copy(),
            None if self.vertex_colors is None else self.vertex_colors.copy(),
            dict(self.landmarks),
            None if self.uvs is None else self.uvs.copy(),
            self.texture,
        )

    def flipped(self) -> TriangleMesh:
        return replace(self, triangles=self.triangles[:, ::-1].copy(), landmarks=dict(self.landmarks))

    def landmark_position(self, name: str) -> np.ndarray:
        return self.vertices[self.landmarks[name]]

    @classmethod
    def empty(cls) -> TriangleMesh:
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))


def _require_nonempty(mesh: TriangleMesh, what: str) -> None:
    if mesh.n_vertices == 0 or mesh.n_triangles == 0:
        raise InvalidInputError(f"{what} requires a non-empty mesh")


def mesh_bounds(mesh: TriangleMesh) -> Aabb:
    _require_nonempty(mesh, "mesh_bounds")
    return Aabb(mesh.vertices.min(axis=0), mesh.vertices.max(axis=0))


def triangle_areas(mesh: TriangleMesh) -> np.ndarray:
    c = mesh.corners()
    return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)


def mesh_area(mesh: TriangleMesh) -> float:
    _require_nonempty(mesh, "mesh_area")
    return float(np.sum(triangle_areas(mesh)))


def mesh_centroid(mesh: TriangleMesh) -> np.ndarray:
    _require_nonempty(mesh, "mesh_centroid")
    return mesh.vertices.mean(axis=0)


def mesh_volume(mesh: TriangleMesh) -> float:
    """Signed enclosed volume (divergence theorem); positive for outward winding."""
    c = mesh.corners()
    return float(np.sum(np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2]))) / 6.0)


def edge_use_counts(mesh: TriangleMesh) -> np.ndarray:
    """How many triangles use each undirected edge."""
    t = mesh.triangles
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e.sort(axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    return counts


def is_watertight(mesh: TriangleMesh) -> bool:
    return mesh.n_triangles > 0 and bool(np.all(edge_use_counts(mesh) == 2))


def merge_meshes(meshes: list[TriangleMesh]) -> TriangleMesh:
    verts, tris, cols = [], [], []
    offset = 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        cols.append(m.vertex_colors if m.vertex_colors is not None else np.full((m.n_vertices, 3), 0.5))
        offset += m.n_vertices
    return TriangleMesh(np.concatenate(verts), np.concatenate(tris), np.concatenate(cols))


def icosphere(radius: float = 1.0, subdivisions: int = 3, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    t = (1.0 + 5.0 ** 0.5) / 2.0
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
         (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
         (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
         (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(p, dtype=np.float64) / np.linalg.norm(p) for p in v]
    faces = f
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return TriangleMesh(np.array(verts) * radius + np.asarray(center), np.array(faces))


def box_mesh(lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0)) -> TriangleMesh:
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    corners = np.array([[(hi if (k >> a) & 1 else lo)[a] for a in range(3)] for k in range(8)])
    # outward winding
    faces = [(0, 2, 1), (1, 2, 3), (4, 5, 6), (5, 7, 6), (0, 1, 4), (1, 5, 4),
             (2, 6, 3), (3, 6, 7), (0, 4, 2), (2, 4, 6), (1, 3, 5), (3, 7, 5)]
    return TriangleMesh(corners, np.array(faces))
