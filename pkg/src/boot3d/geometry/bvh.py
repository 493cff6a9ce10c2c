"""Axis-aligned BVH over triangles with exact closest-point queries."""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from ..errors import InvalidInputError
from .mesh import TriangleMesh

LEAF_SIZE = 8


@numba.njit(cache=True, nogil=True)
def _closest_segment(px, py, pz, ax, ay, az, bx, by, bz):
    dx, dy, dz = bx - ax, by - ay, bz - az
    ll = dx * dx + dy * dy + dz * dz
    t = 0.0
    if ll > 0.0:
        t = min(max(((px - ax) * dx + (py - ay) * dy + (pz - az) * dz) / ll, 0.0), 1.0)
    return ax + t * dx, ay + t * dy, az + t * dz


@numba.njit(cache=True, nogil=True)
def _closest_degenerate(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
    """Zero-area triangle: nearest point over its three edges."""
    best = np.inf
    rx, ry, rz = ax, ay, az
    for k in range(3):
        if k == 0:
            qx, qy, qz = _closest_segment(px, py, pz, ax, ay, az, bx, by, bz)
        elif k == 1:
            qx, qy, qz = _closest_segment(px, py, pz, bx, by, bz, cx, cy, cz)
        else:
            qx, qy, qz = _closest_segment(px, py, pz, cx, cy, cz, ax, ay, az)
        d2 = (px - qx) ** 2 + (py - qy) ** 2 + (pz - qz) ** 2
        if d2 < best:
            best = d2
            rx, ry, rz = qx, qy, qz
    return rx, ry, rz


@numba.njit(cache=True, nogil=True)
def _closest_scalar(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
    """Closest point to p on triangle abc by Voronoi-region walk (scalar form)."""
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    nx = aby * acz - abz * acy
    ny = abz * acx - abx * acz
    nz = abx * acy - aby * acx
    if nx * nx + ny * ny + nz * nz == 0.0:
        return _closest_degenerate(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz)
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az
    bpx, bpy, bpz = px - bx, py - by, pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return ax + v * abx, ay + v * aby, az + v * abz
    cpx, cpy, cpz = px - cx, py - cy, pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return ax + w * acx, ay + w * acy, az + w * acz
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return bx + w * (cx - bx), by + w * (cy - by), bz + w * (cz - bz)
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return ax + abx * v + acx * w, ay + aby * v + acy * w, az + abz * v + acz * w


@numba.njit(cache=True, nogil=True)
def closest_on_triangle(p, a, b, c):
    """Closest point to ``p`` on triangle abc."""
    x, y, z = _closest_scalar(p[0], p[1], p[2], a[0], a[1], a[2], b[0], b[1], b[2], c[0], c[1], c[2])
    return np.array([x, y, z])


@numba.njit(cache=True)
def _build(tri_min, tri_max, centroids, leaf_size):
    m = tri_min.shape[0]
    order = np.arange(m)
    cap = 2 * (m // 1 + 1)
    nmin = np.empty((cap, 3))
    nmax = np.empty((cap, 3))
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    start = np.zeros(cap, dtype=np.int64)
    count = np.zeros(cap, dtype=np.int64)
    stack = np.empty((cap, 3), dtype=np.int64)  # node, lo, hi
    n_nodes = 1
    stack[0, 0], stack[0, 1], stack[0, 2] = 0, 0, m
    sp = 1
    while sp > 0:
        sp -= 1
        node, lo, hi = stack[sp, 0], stack[sp, 1], stack[sp, 2]
        idx = order[lo:hi]
        for d in range(3):
            nmin[node, d] = tri_min[idx, d].min()
            nmax[node, d] = tri_max[idx, d].max()
        if hi - lo <= leaf_size:
            start[node] = lo
            count[node] = hi - lo
            continue
        cmin = np.empty(3)
        cmax = np.empty(3)
        for d in range(3):
            cmin[d] = centroids[idx, d].min()
            cmax[d] = centroids[idx, d].max()
        axis = np.argmax(cmax - cmin)
        perm = np.argsort(centroids[idx, axis], kind="mergesort")
        order[lo:hi] = idx[perm]
        mid = lo + (hi - lo) // 2
        l_node, r_node = n_nodes, n_nodes + 1
        n_nodes += 2
        left[node], right[node] = l_node, r_node
        stack[sp, 0], stack[sp, 1], stack[sp, 2] = r_node, mid, hi
        sp += 1
        stack[sp, 0], stack[sp, 1], stack[sp, 2] = l_node, lo, mid
        sp += 1
    return (nmin[:n_nodes].copy(), nmax[:n_nodes].copy(), left[:n_nodes].copy(), right[:n_nodes].copy(),
            start[:n_nodes].copy(), count[:n_nodes].copy(), order)


@numba.njit(cache=True, nogil=True)
def _box_dist2(p, bmin, bmax):
    s = 0.0
    for d in range(3):
        if p[d] < bmin[d]:
            s += (bmin[d] - p[d]) ** 2
        elif p[d] > bmax[d]:
            s += (p[d] - bmax[d]) ** 2
    return s


@numba.njit(cache=True, nogil=True)
def _query(queries, corners, nmin, nmax, left, right, start, count, order):
    nq = queries.shape[0]
    out_p = np.empty((nq, 3))
    out_d = np.empty(nq)
    out_t = np.empty(nq, dtype=np.int64)
    stack = np.empty(128, dtype=np.int64)
    for q in range(nq):
        px, py, pz = queries[q, 0], queries[q, 1], queries[q, 2]
        p = queries[q]
        best = np.inf
        bx, by, bz = 0.0, 0.0, 0.0
        best_t = -1
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if _box_dist2(p, nmin[node], nmax[node]) > best:
                continue
            if left[node] < 0:
                for k in range(start[node], start[node] + count[node]):
                    t = order[k]
                    cx, cy, cz = _closest_scalar(px, py, pz,
                                                 corners[t, 0, 0], corners[t, 0, 1], corners[t, 0, 2],
                                                 corners[t, 1, 0], corners[t, 1, 1], corners[t, 1, 2],
                                                 corners[t, 2, 0], corners[t, 2, 1], corners[t, 2, 2])
                    d2 = (px - cx) ** 2 + (py - cy) ** 2 + (pz - cz) ** 2
                    if d2 < best or (d2 == best and t < best_t):
                        best = d2
                        bx, by, bz = cx, cy, cz
                        best_t = t
            else:
                l, r = left[node], right[node]
                dl = _box_dist2(p, nmin[l], nmax[l])
                dr = _box_dist2(p, nmin[r], nmax[r])
                # push the farther child first so the nearer one is visited next
                if dl <= dr:
                    stack[sp] = r
                    stack[sp + 1] = l
                else:
                    stack[sp] = l
                    stack[sp + 1] = r
                sp += 2
        out_p[q, 0], out_p[q, 1], out_p[q, 2] = bx, by, bz
        out_d[q] = np.sqrt(best)
        out_t[q] = best_t
    return out_p, out_d, out_t


@dataclass(frozen=True, eq=False)
class BvhIndex:
    corners: np.ndarray
    node_min: np.ndarray
    node_max: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    order: np.ndarray

    @property
    def n_triangles(self) -> int:
        return len(self.corners)

    def query(self, points: np.ndarray):
        """Closest surface points, distances and triangle ids for ``points`` (n, 3)."""
        pts = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
        return _query(pts, self.corners, self.node_min, self.node_max, self.left, self.right,
                      self.start, self.count, self.order)


def build_bvh(mesh: TriangleMesh, leaf_size: int = LEAF_SIZE) -> BvhIndex:
    if mesh.n_triangles == 0:
        raise InvalidInputError("cannot index an empty mesh")
    corners = np.ascontiguousarray(mesh.corners())
    tri_min = corners.min(axis=1)
    tri_max = corners.max(axis=1)
    cen = corners.mean(axis=1)
    nodes = _build(tri_min, tri_max, cen, int(leaf_size))
    return BvhIndex(corners, *nodes)


def closest_point(query, index: BvhIndex):
    """Nearest point on the indexed surface and its distance."""
    if index.n_triangles == 0:
        raise InvalidInputError("empty index")
    p, d, _ = index.query(np.asarray(query, dtype=np.float64).reshape(1, 3))
    return p[0], float(d[0])
