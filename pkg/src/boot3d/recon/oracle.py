"""Reconstructor that knows the mesh behind every registered image."""
from __future__ import annotations

import threading

from ..errors import UnknownImageError
from ..geometry.grid import VoxelGrid
from ..geometry.mesh import Aabb, TriangleMesh
from ..geometry.voxelize import voxelize
from ..render import Image
from .base import image_key

DEFAULT_BOUNDS = Aabb.cube(0.85)


class OracleReconstructor:
    """Perfect reconstruction up to voxelization, for any registered image."""

    def __init__(self, dims=(64, 64, 64), bounds: Aabb = DEFAULT_BOUNDS, smooth: bool = True):
        self.dims = tuple(int(d) for d in dims)
        self.bounds = bounds
        self.smooth = smooth
        self.registry: dict[str, TriangleMesh] = {}
        self._lock = threading.Lock()

    def register(self, image: Image, mesh: TriangleMesh) -> str:
        key = image_key(image)
        with self._lock:
            self.registry[key] = mesh
        return key

    def mesh_for(self, image: Image) -> TriangleMesh:
        key = image_key(image)
        try:
            return self.registry[key]
        except KeyError:
            raise UnknownImageError(f"image {key[:12]} is not registered with the oracle") from None

    def reconstruct(self, image: Image) -> VoxelGrid:
        return voxelize(self.mesh_for(image), self.dims, self.bounds, smooth=self.smooth)


def oracle_reconstruct(image: Image, registry: dict[str, TriangleMesh], dims=(64, 64, 64),
                       bounds: Aabb = DEFAULT_BOUNDS, smooth: bool = True) -> VoxelGrid:
    key = image_key(image)
    if key not in registry:
        raise UnknownImageError(f"image {key[:12]} is not registered with the oracle")
    return voxelize(registry[key], dims, bounds, smooth=smooth)
