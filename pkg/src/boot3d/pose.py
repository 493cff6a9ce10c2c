"""Face pose from vertex statistics.

The depth axis of a mask-like face is the eigenvector of the vertex
covariance with the smallest eigenvalue; the bilateral-symmetry normal is
whichever of the other two eigenvectors gives the better mirror match.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateInputError, InvalidInputError
from .geometry.mesh import TriangleMesh

TIE_TOLERANCE = 0.05


@dataclass(frozen=True)
class SymmetricMatrix3:
    xx: float
    yy: float
    zz: float
    xy: float
    xz: float
    yz: float

    def __post_init__(self):
        if not all(np.isfinite([self.xx, self.yy, self.zz, self.xy, self.xz, self.yz])):
            raise InvalidInputError("symmetric matrix has non-finite entries")

    def to_array(self) -> np.ndarray:
        return np.array([[self.xx, self.xy, self.xz],
                         [self.xy, self.yy, self.yz],
                         [self.xz, self.yz, self.zz]])

    @classmethod
    def from_array(cls, a) -> SymmetricMatrix3:
        a = np.asarray(a, dtype=np.float64)
        return cls(a[0, 0], a[1, 1], a[2, 2], 0.5 * (a[0, 1] + a[1, 0]),
                   0.5 * (a[0, 2] + a[2, 0]), 0.5 * (a[1, 2] + a[2, 1]))


@dataclass(frozen=True)
class FaceFrame:
    centroid: np.ndarray
    lateral: np.ndarray
    vertical: np.ndarray
    gaze: np.ndarray
    eigenvalues: np.ndarray
    tie: bool = False

    @property
    def axes(self) -> np.ndarray:
        """Columns (lateral, vertical, gaze): rotation from canonical to world."""
        return np.column_stack([self.lateral, self.vertical, self.gaze])

    def to_row(self) -> list[float]:
        return [float(x) for x in np.concatenate([self.centroid, self.lateral, self.vertical, self.gaze])]

    @classmethod
    def from_row(cls, row, eigenvalues=(0.0, 0.0, 0.0)) -> FaceFrame:
        r = np.asarray(row, dtype=np.float64)
        if r.size != 12:
            raise InvalidInputError("face frame row needs 12 numbers")
        return cls(r[0:3], r[3:6], r[6:9], r[9:12], np.asarray(eigenvalues, dtype=np.float64))

    @classmethod
    def canonical(cls, centroid=(0.0, 0.0, 0.0)) -> FaceFrame:
        e = np.eye(3)
        return cls(np.asarray(centroid, dtype=np.float64), e[0], e[1], e[2], np.zeros(3))

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> FaceFrame:
        return FaceFrame(rotation @ self.centroid + translation, rotation @ self.lateral,
                         rotation @ self.vertical, rotation @ self.gaze, self.eigenvalues, self.tie)


def sample_covariance(mesh: TriangleMesh):
    v = mesh.vertices
    if len(v) < 4:
        raise DegenerateInputError(f"need at least 4 vertices, got {len(v)}")
    mu = v.mean(axis=0)
    d = v - mu
    cov = d.T @ d / (len(v) - 1)
    w = np.linalg.eigvalsh(cov)
    if w[-1] <= 0 or w[0] <= 1e-12 * w[-1]:
        raise DegenerateInputError("vertex cloud is coplanar or collinear")
    return mu, SymmetricMatrix3.from_array(cov)


def eigen_symmetric3(cov, tol: float = 1e-12, max_sweeps: int = 50):
    """Cyclic Jacobi eigen-decomposition of a symmetric 3×3 matrix.

    Returns ``[(eigenvalue, unit eigenvector), ...]`` sorted by descending
    eigenvalue.
    """
    a = cov.to_array() if isinstance(cov, SymmetricMatrix3) else np.array(cov, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("matrix has non-finite entries")
    a = 0.5 * (a + a.T)
    v = np.eye(3)
    scale = max(np.abs(a).max(), np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = np.sqrt(a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2)
        if off <= tol * scale:
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = a[p, q]
            if apq == 0.0:
                continue
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            rot = np.eye(3)
            rot[p, p] = rot[q, q] = c
            rot[p, q] = s
            rot[q, p] = -s
            a = rot.T @ a @ rot
            a[p, q] = a[q, p] = 0.0
            v = v @ rot
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return [(float(w[i]), v[:, i] / np.linalg.norm(v[:, i])) for i in order]


def symmetry_score(mesh: TriangleMesh, plane_point, plane_normal, tree: cKDTree | None = None) -> float:
    """Mean distance from mirrored vertices to their nearest original vertex,
    relative to the bounding-box diagonal (0 for a perfect mirror match)."""
    if mesh.n_vertices == 0:
        raise InvalidInputError("symmetry_score of an empty mesh")
    n = np.asarray(plane_normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    v = mesh.vertices
    mirrored = v - 2.0 * np.outer((v - np.asarray(plane_point, dtype=np.float64)) @ n, n)
    if tree is None:
        tree = cKDTree(v)
    dist, _ = tree.query(mirrored)
    diag = np.linalg.norm(v.max(axis=0) - v.min(axis=0))
    return float(dist.mean() / diag) if diag > 0 else 0.0


def _side_area(mesh: TriangleMesh, axis) -> float:
    """Area of triangles facing +axis minus area facing -axis.

    Both sides project to the same silhouette, so the more curved side (the
    front relief of a face) carries more area.
    """
    n = mesh.face_normals(normalize=False)
    facing = n @ axis
    areas = 0.5 * np.linalg.norm(n, axis=1)
    return float(areas[facing > 0].sum() - areas[facing < 0].sum())


def _spread_difference(mesh: TriangleMesh, centroid, axis, across) -> float:
    """Lateral spread of the +axis half minus that of the -axis half."""
    d = mesh.vertices - centroid
    h = d @ axis
    w = np.abs(d @ across)
    up, down = w[h > 0], w[h < 0]
    if len(up) == 0 or len(down) == 0:
        return 0.0
    return float(up.mean() - down.mean())


def estimate_face_frame(mesh: TriangleMesh) -> FaceFrame:
    """Centroid, symmetry normal, vertical and gaze axes of a face mesh.

    Sign conventions, first applicable rule wins: gaze points at the
    ``nose_tip`` landmark, else to the side carrying more surface area;
    lateral points at ``eye_outer_left``, else vertical points to the wider
    half of the face; the remaining axis completes a right-handed frame.
    """
    centroid, cov = sample_covariance(mesh)
    pairs = eigen_symmetric3(cov)
    lam = np.array([p[0] for p in pairs])
    lam = np.maximum(lam, 0.0)
    big, mid, gaze = pairs[0][1], pairs[1][1], pairs[2][1]

    tree = cKDTree(mesh.vertices)
    s_big = symmetry_score(mesh, centroid, big, tree)
    s_mid = symmetry_score(mesh, centroid, mid, tree)
    lateral, vertical = (mid, big) if s_mid <= s_big else (big, mid)
    tie = bool(lam[0] <= 0 or (lam[0] - lam[1]) < TIE_TOLERANCE * lam[0]
               or (lam[1] - lam[2]) < TIE_TOLERANCE * lam[1])

    lm = mesh.landmarks
    if "nose_tip" in lm:
        s = (mesh.vertices[lm["nose_tip"]] - centroid) @ gaze
    else:
        s = _side_area(mesh, gaze)
    if s < 0:
        gaze = -gaze

    if "eye_outer_left" in lm:
        if (mesh.vertices[lm["eye_outer_left"]] - centroid) @ lateral < 0:
            lateral = -lateral
        vertical = np.cross(gaze, lateral)
    else:
        if _spread_difference(mesh, centroid, vertical, lateral) < 0:
            vertical = -vertical
        lateral = np.cross(vertical, gaze)
    return FaceFrame(centroid, lateral, vertical, gaze, lam, tie)


def axis_angle_deg(a, b) -> float:
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    c = a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))
