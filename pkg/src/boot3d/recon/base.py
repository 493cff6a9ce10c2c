"""Reconstructor interface and image identity."""
from __future__ import annotations

import hashlib
from typing import Protocol, runtime_checkable

from ..geometry.grid import VoxelGrid
from ..geometry.mesh import TriangleMesh
from ..render import Image


def image_key(image: Image) -> str:
    """Content hash of the 8-bit quantized pixels, stable across PPM round trips."""
    h = hashlib.sha256(f"{image.width}x{image.height}:".encode())
    h.update(image.to_bytes())
    return h.hexdigest()


@runtime_checkable
class Reconstructor(Protocol):
    def reconstruct(self, image: Image) -> VoxelGrid: ...


@runtime_checkable
class TrainableReconstructor(Reconstructor, Protocol):
    def fit_step(self, batch, learning_rate: float) -> float: ...

    def snapshot(self): ...

    def restore(self, snap) -> None: ...


def observe(reconstructor, image: Image, mesh: TriangleMesh) -> None:
    """Tell ``reconstructor`` that ``image`` was rendered from ``mesh``.

    Only the oracle uses this (it registers the pair); learned models ignore it.
    """
    hook = getattr(reconstructor, "register", None)
    if hook is not None:
        hook(image, mesh)
