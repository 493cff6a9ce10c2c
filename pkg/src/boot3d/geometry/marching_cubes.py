from __future__ import annotations

import numba
import numpy as np

from ..errors import InvalidInputError
from . import _mc_tables
from .grid import VoxelGrid
from .mesh import TriangleMesh


def _build_tables():
    tri = np.full((256, 16), -1, dtype=np.int64)
    count = np.zeros(256, dtype=np.int64)
    for case, edges in enumerate(_mc_tables.TRIANGLES):
        tri[case, : len(edges)] = edges
        count[case] = len(edges) // 3
    # per edge: axis along which it runs and the offset of its lower end
    edge_axis = np.zeros(12, dtype=np.int64)
    edge_lo = np.zeros((12, 3), dtype=np.int64)
    corners = np.array(_mc_tables.CORNERS)
    for e, (a, b) in enumerate(_mc_tables.EDGES):
        pa, pb = corners[a], corners[b]
        edge_axis[e] = int(np.flatnonzero(pa != pb)[0])
        edge_lo[e] = np.minimum(pa, pb)
    return tri, count, corners.astype(np.int64), edge_axis, edge_lo


_TRI, _COUNT, _CORNERS, _EDGE_AXIS, _EDGE_LO = _build_tables()


@numba.njit(cache=True)
def _cell_case(vals, i, j, k, iso, corners):
    case = 0
    for c in range(8):
        if vals[i + corners[c, 0], j + corners[c, 1], k + corners[c, 2]] < iso:
            case |= 1 << c
    return case


@numba.njit(cache=True)
def _march(vals, iso, complement, origin, spacing, tri, count, corners, edge_axis, edge_lo):
    nx, ny, nz = vals.shape
    n_pts = nx * ny * nz
    ntri = 0
    for k in range(nz - 1):
        for j in range(ny - 1):
            for i in range(nx - 1):
                case = _cell_case(vals, i, j, k, iso, corners)
                if complement:
                    case = 255 - case
                ntri += count[case]

    vmap = np.full(3 * n_pts, -1, dtype=np.int64)
    verts = np.empty((3 * ntri, 3), dtype=np.float64)
    tris = np.empty((ntri, 3), dtype=np.int64)
    nv = 0
    t = 0
    lo = np.empty(3, dtype=np.int64)
    for k in range(nz - 1):
        for j in range(ny - 1):
            for i in range(nx - 1):
                case = _cell_case(vals, i, j, k, iso, corners)
                if complement:
                    case = 255 - case
                m = count[case]
                for s in range(m):
                    for c in range(3):
                        e = tri[case, 3 * s + c]
                        ax = edge_axis[e]
                        lo[0] = i + edge_lo[e, 0]
                        lo[1] = j + edge_lo[e, 1]
                        lo[2] = k + edge_lo[e, 2]
                        gid = ax * n_pts + lo[0] + nx * (lo[1] + ny * lo[2])
                        if vmap[gid] < 0:
                            v0 = np.float64(vals[lo[0], lo[1], lo[2]])
                            if ax == 0:
                                v1 = np.float64(vals[lo[0] + 1, lo[1], lo[2]])
                            elif ax == 1:
                                v1 = np.float64(vals[lo[0], lo[1] + 1, lo[2]])
                            else:
                                v1 = np.float64(vals[lo[0], lo[1], lo[2] + 1])
                            frac = (iso - v0) / (v1 - v0)
                            for d in range(3):
                                p = origin[d] + (lo[d] + 0.5) * spacing[d]
                                if d == ax:
                                    p = p + frac * spacing[d]
                                verts[nv, d] = p
                            vmap[gid] = nv
                            nv += 1
                        # complement branch reverses winding
                        if complement:
                            tris[t, 2 - c] = vmap[gid]
                        else:
                            tris[t, c] = vmap[gid]
                    t += 1
    return verts[:nv].copy(), tris


def _use_complement(values: np.ndarray, iso: float) -> bool:
    """Global choice of ambiguous-face resolution.

    Decided once per grid from the sampled average so that the extraction is
    crack-free and commutes with ``(values, iso) -> (1 - values, 1 - iso)``.
    """
    v = values.astype(np.float64)
    mean = float(v.mean())
    if mean != iso:
        return mean > iso
    above = int(np.count_nonzero(v > iso))
    below = int(np.count_nonzero(v < iso))
    return above > below


def marching_cubes(grid: VoxelGrid, iso: float = 0.5) -> TriangleMesh:
    """Extract the ``iso`` level set of ``grid`` as a triangle mesh.

    Vertices are linearly interpolated along cell edges and shared between
    neighbouring cells; normals point toward lower occupancy. An iso value
    outside the value range gives an empty mesh.
    """
    vals = grid.values
    if not np.isfinite(iso):
        raise InvalidInputError("iso must be finite")
    if min(vals.shape) < 2:
        return TriangleMesh.empty()
    complement = _use_complement(vals, iso)
    verts, tris = _march(vals, float(iso), complement, grid.origin, grid.spacing,
                         _TRI, _COUNT, _CORNERS, _EDGE_AXIS, _EDGE_LO)
    if len(tris) == 0:
        return TriangleMesh.empty()
    return TriangleMesh(verts, tris)
