"""VXG1 voxel files, ASCII OBJ meshes and landmark sidecars."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .grid import VoxelGrid
from .mesh import TriangleMesh

VXG_MAGIC = b"VXG1"
VXG_VERSION = 1
_HEADER = struct.Struct("<4sI8x")
_DIMS = struct.Struct("<3I")
_FRAME = struct.Struct("<6d")


def write_vxg(path, grid: VoxelGrid) -> None:
    nx, ny, nz = grid.dims
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(VXG_MAGIC, VXG_VERSION))
        fh.write(_DIMS.pack(nx, ny, nz))
        fh.write(_FRAME.pack(*grid.origin, *grid.spacing))
        fh.write(grid.flat().astype("<f4").tobytes())


def read_vxg(path) -> VoxelGrid:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size + _DIMS.size + _FRAME.size:
        raise FormatError(f"{path}: truncated VXG1 header")
    magic, version = _HEADER.unpack_from(data, 0)
    if magic != VXG_MAGIC or version != VXG_VERSION:
        raise FormatError(f"{path}: not a VXG1 v{VXG_VERSION} file")
    off = _HEADER.size
    nx, ny, nz = _DIMS.unpack_from(data, off)
    off += _DIMS.size
    frame = _FRAME.unpack_from(data, off)
    off += _FRAME.size
    n = nx * ny * nz
    if len(data) - off != 4 * n:
        raise FormatError(f"{path}: expected {n} values, found {(len(data) - off) // 4}")
    flat = np.frombuffer(data, dtype="<f4", count=n, offset=off)
    return VoxelGrid.from_flat(flat, (nx, ny, nz), frame[:3], frame[3:])


def _fmt(x: float) -> str:
    return repr(float(x))


def landmark_path(obj_path) -> Path:
    return Path(obj_path).with_suffix(".lmk")


def write_obj(path, mesh: TriangleMesh, write_landmarks: bool = True) -> None:
    lines = []
    cols = mesh.vertex_colors
    for i, v in enumerate(mesh.vertices):
        row = "v " + " ".join(_fmt(x) for x in v)
        if cols is not None:
            row += " " + " ".join(_fmt(c) for c in cols[i])
        lines.append(row)
    if mesh.uvs is not None:
        for uv in mesh.uvs:
            lines.append("vt " + " ".join(_fmt(x) for x in uv))
        lines += ["f " + " ".join(f"{i + 1}/{i + 1}" for i in tri) for tri in mesh.triangles]
    else:
        lines += ["f " + " ".join(str(i + 1) for i in tri) for tri in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")
    if write_landmarks and mesh.landmarks:
        write_landmarks_file(landmark_path(path), mesh.landmarks)


def read_obj(path, read_landmarks: bool = True) -> TriangleMesh:
    verts, cols, uvs, tris = [], [], [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        parts = raw.split("#", 1)[0].split()
        if not parts:
            continue
        try:
            if parts[0] == "v":
                nums = [float(x) for x in parts[1:]]
                if len(nums) not in (3, 4, 6, 7):
                    raise ValueError("vertex needs 3 or 6 numbers")
                verts.append(nums[:3])
                if len(nums) >= 6:
                    cols.append(nums[-3:])
            elif parts[0] == "vt":
                uvs.append([float(x) for x in parts[1:3]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                # fan-triangulate polygons
                for k in range(1, len(idx) - 1):
                    tris.append([idx[0], idx[k], idx[k + 1]])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    if cols and len(cols) != len(verts):
        raise FormatError(f"{path}: per-vertex colors on only some vertices")
    landmarks = {}
    lp = landmark_path(path)
    if read_landmarks and lp.exists():
        landmarks = read_landmarks_file(lp)
    return TriangleMesh(
        np.array(verts, dtype=np.float64).reshape(-1, 3),
        np.array(tris, dtype=np.int64).reshape(-1, 3),
        np.array(cols) if cols else None,
        landmarks,
        np.array(uvs) if uvs and len(uvs) == len(verts) else None,
    )


def write_landmarks_file(path, landmarks: dict[str, int]) -> None:
    Path(path).write_text("".join(f"{name} {idx}\n" for name, idx in sorted(landmarks.items())))


def read_landmarks_file(path) -> dict[str, int]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        parts = raw.split()
        if not parts:
            continue
        if len(parts) != 2:
            raise FormatError(f"{path}:{lineno}: expected 'name index'")
        out[parts[0]] = int(parts[1])
    return out
