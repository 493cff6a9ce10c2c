"""Normalised mean error, inter-ocular distance and point-to-point ICP."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from ..errors import DegenerateAlignmentError, InvalidInputError, MissingLandmarkError
from ..geometry.mesh import TriangleMesh
from ..viewgen import RigidTransform, compose
from ..geometry.bvh import BvhIndex, build_bvh

PROXY_FACTOR = 0.4


def interocular_distance(mesh: TriangleMesh) -> float:
    lm = mesh.landmarks
    missing = [k for k in ("eye_outer_left", "eye_outer_right") if k not in lm]
    if missing:
        raise MissingLandmarkError(f"mesh lacks landmark(s) {', '.join(missing)}")
    return float(np.linalg.norm(mesh.vertices[lm["eye_outer_left"]] - mesh.vertices[lm["eye_outer_right"]]))


def proxy_interocular(mesh: TriangleMesh, lateral=None) -> float:
    """0.4 × the extent of the mesh along the lateral axis (world x by default)."""
    if mesh.n_vertices == 0:
        raise InvalidInputError("proxy distance of an empty mesh")
    axis = np.array([1.0, 0.0, 0.0]) if lateral is None else np.asarray(lateral, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    s = mesh.vertices @ axis
    return PROXY_FACTOR * float(s.max() - s.min())


def surface_distances(points: np.ndarray, target: TriangleMesh | BvhIndex) -> np.ndarray:
    index = target if isinstance(target, BvhIndex) else build_bvh(target)
    return index.query(points)[1]


def nme(pred: TriangleMesh, gt: TriangleMesh | BvhIndex, d: float) -> float:
    """Mean distance from ``pred`` vertices to the ``gt`` surface, divided by ``d``."""
    if not (np.isfinite(d) and d > 0):
        raise InvalidInputError(f"normaliser d must be positive, got {d}")
    if pred.n_vertices == 0:
        raise InvalidInputError("predicted mesh is empty")
    return float(surface_distances(pred.vertices, gt).mean() / d)


def procrustes(src: np.ndarray, dst: np.ndarray) -> RigidTransform:
    """Least-squares proper rigid transform taking ``src`` rows onto ``dst`` rows."""
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    h = (src - mu_s).T @ (dst - mu_d)
    u, s, vt = np.linalg.svd(h)
    if s[0] <= 0 or s[1] <= 1e-12 * s[0]:
        raise DegenerateAlignmentError("correspondences are rank deficient")
    fix = np.diag([1.0, 1.0, np.sign(np.linalg.det(vt.T @ u.T)) or 1.0])
    r = vt.T @ fix @ u.T
    return RigidTransform(r, mu_d - r @ mu_s)


@dataclass(frozen=True)
class IcpResult:
    transform: RigidTransform
    residual: float
    iters: int
    history: tuple[float, ...]

    def __iter__(self):
        return iter((self.transform, self.residual, self.iters))


def _rms(a, b) -> float:
    return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1))))


def _to_params(t: RigidTransform) -> np.ndarray:
    return np.concatenate([Rotation.from_matrix(t.rotation).as_rotvec(), t.translation])


def _from_params(x: np.ndarray) -> RigidTransform:
    return RigidTransform(Rotation.from_rotvec(x[:3]).as_matrix(), x[3:])


def icp_align(src: TriangleMesh, dst: TriangleMesh, max_iters: int = 50, rel_tol: float = 1e-6,
              stride: int = 1, index: BvhIndex | None = None, history_size: int = 5) -> IcpResult:
    """Point-to-point ICP from ``src`` vertices onto the ``dst`` surface.

    The plain iteration maps the current pose to the pose composed with the
    Procrustes step onto the current closest points. That fixed-point map is
    Anderson-accelerated over the last ``history_size`` iterates (0 disables
    it); an accelerated pose is kept only when it lowers the residual, else
    the plain step is taken, so the residual never increases.
    ``history[0]`` is the RMS residual after centroid alignment and
    ``history[k]`` the residual after iteration k.
    """
    if src.n_vertices == 0 or dst.n_vertices == 0:
        raise InvalidInputError("ICP needs non-empty meshes")
    if max_iters < 1 or stride < 1 or history_size < 0:
        raise InvalidInputError("max_iters and stride must be >= 1, history_size >= 0")
    if index is None:
        index = build_bvh(dst)
    pts = src.vertices[::stride]
    floor = 1e-12 * float(np.linalg.norm(np.ptp(dst.vertices, axis=0)))

    def evaluate(t: RigidTransform):
        p = t.apply(pts)
        m = index.query(p)[0]
        return p, m, _rms(p, m)

    total = RigidTransform(np.eye(3), dst.vertices.mean(axis=0) - pts.mean(axis=0))
    cur, match, residual = evaluate(total)
    history = [residual]
    xs, gs = [], []
    it = 0
    while it < max_iters:
        it += 1
        plain = compose(procrustes(cur, match), total)
        x, g = _to_params(total), _to_params(plain)
        xs.append(x)
        gs.append(g)
        del xs[:-history_size - 1], gs[:-history_size - 1]
        nxt = None
        if history_size and len(xs) > 1:
            f = np.array(gs) - np.array(xs)
            df = np.diff(f, axis=0).T
            dg = np.diff(np.array(gs), axis=0).T
            gamma = np.linalg.lstsq(df, f[-1], rcond=None)[0]
            x_aa = g - dg @ gamma
            if np.all(np.isfinite(x_aa)) and np.linalg.norm(x_aa[:3]) < np.pi:
                t_aa = _from_params(x_aa)
                p_aa, m_aa, r_aa = evaluate(t_aa)
                if r_aa < residual:
                    nxt = (t_aa, p_aa, m_aa, r_aa)
        if nxt is None:
            nxt = (plain,) + evaluate(plain)
            xs, gs = xs[-1:], gs[-1:]
        prev = residual
        if nxt[3] <= residual:
            total, cur, match, residual = nxt
        history.append(residual)
        if residual <= floor or prev - residual <= rel_tol * prev:
            break
    return IcpResult(total, residual, it, tuple(history))
