from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError
from .mesh import Aabb


@dataclass(eq=False)
class VoxelGrid:
    """Dense occupancy volume.

    ``values`` has shape (nx, ny, nz); sample (i, j, k) sits at the centre of
    its cell, ``origin + (index + 0.5) * spacing``. Values are stored as
    float32 and clamped to [0, 1].
    """

    values: np.ndarray
    origin: np.ndarray
    spacing: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.ndim != 3 or min(vals.shape) < 1:
            raise InvalidInputError(f"grid values must be a non-empty 3-d array, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise InvalidInputError("grid has non-finite values")
        self.values = np.clip(vals, 0.0, 1.0).astype(np.float32)
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.spacing = np.asarray(self.spacing, dtype=np.float64).reshape(3)
        if not np.all(self.spacing > 0) or not np.all(np.isfinite(self.spacing)):
            raise InvalidInputError(f"grid spacing must be positive, got {self.spacing}")
        if not np.all(np.isfinite(self.origin)):
            raise InvalidInputError("grid origin must be finite")

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.values.shape)

    @property
    def bounds(self) -> Aabb:
        return Aabb(self.origin, self.origin + self.spacing * np.array(self.dims))

    def flat(self) -> np.ndarray:
        """Values in x-fastest order."""
        return self.values.ravel(order="F")

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.dims[axis]) + 0.5) * self.spacing[axis]

    def sample_positions(self) -> np.ndarray:
        xs, ys, zs = (self.axis_centers(a) for a in range(3))
        g = np.stack(np.meshgrid(xs, ys, zs, indexing="ij"), axis=-1)
        return g

    def same_layout(self, other: VoxelGrid) -> bool:
        return (self.dims == other.dims and np.array_equal(self.origin, other.origin)
                and np.array_equal(self.spacing, other.spacing))

    @classmethod
    def from_flat(cls, flat, dims, origin, spacing) -> VoxelGrid:
        flat = np.asarray(flat)
        nx, ny, nz = (int(d) for d in dims)
        if flat.size != nx * ny * nz:
            raise InvalidInputError(f"value count {flat.size} != {nx}*{ny}*{nz}")
        return cls(flat.reshape((nx, ny, nz), order="F"), origin, spacing)

    @classmethod
    def over_bounds(cls, values: np.ndarray, bounds: Aabb) -> VoxelGrid:
        dims = np.array(values.shape, dtype=np.float64)
        return cls(values, bounds.min, bounds.extent / dims)

    @classmethod
    def zeros(cls, dims, bounds: Aabb) -> VoxelGrid:
        return cls.over_bounds(np.zeros(tuple(int(d) for d in dims), dtype=np.float32), bounds)


def sphere_grid(dims=(64, 64, 64), radius: float = 0.7, bounds: Aabb | None = None, center=(0.0, 0.0, 0.0)) -> VoxelGrid:
    """Occupancy of a ball, linear across a one-cell band around the surface
    so the 0.5 level set sits on the sphere."""
    bounds = Aabb.cube(1.0) if bounds is None else bounds
    grid = VoxelGrid.zeros(dims, bounds)
    r = np.linalg.norm(grid.sample_positions() - np.asarray(center, dtype=np.float64), axis=-1)
    h = float(grid.spacing.min())
    grid.values = np.clip(0.5 - (r - radius) / h, 0.0, 1.0).astype(np.float32)
    return grid
