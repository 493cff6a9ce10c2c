"""Linear-plus-logistic image-to-occupancy regressor trained by plain SGD.

Every output cell is an independent logistic regression on the same
feature vector: the downsampled grayscale image, centred at 0, plus a bias
term. The reported loss is binary cross-entropy averaged over cells and
samples; each cell's weights step along its own BCE gradient.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from ..errors import FormatError, InvalidConfigError, InvalidInputError
from ..geometry.grid import VoxelGrid
from ..geometry.mesh import Aabb
from ..render import Image
from .oracle import DEFAULT_BOUNDS

MAGIC = b"TOY1"
VERSION = 1
_HEAD = struct.Struct("<4sI4I6d")
_EPS = 1e-12


def image_features(image: Image, size: int) -> np.ndarray:
    """Box-downsampled grayscale, shifted to [-0.5, 0.5], with a trailing 1."""
    gray = image.grayscale().astype(np.float32)
    if gray.shape != (size, size):
        gray = np.asarray(PILImage.fromarray(gray, mode="F").resize((size, size), PILImage.BOX))
    return np.append(gray.astype(np.float64).ravel() - 0.5, 1.0)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _bce(p, y) -> float:
    p = np.clip(p, _EPS, 1.0 - _EPS)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


class ToyRegressor:
    def __init__(self, input_size: int = 16, dims=(24, 24, 24), bounds: Aabb = DEFAULT_BOUNDS):
        self.input_size = int(input_size)
        self.dims = tuple(int(d) for d in dims)
        if self.input_size < 1 or len(self.dims) != 3 or min(self.dims) < 1:
            raise InvalidConfigError("toy model needs a positive input size and grid dims")
        self.bounds = bounds
        # (features, cells); cells in x-fastest order
        self.weights = np.zeros((self.input_size ** 2 + 1, int(np.prod(self.dims))))

    @property
    def n_params(self) -> int:
        return self.weights.size

    def features(self, image: Image) -> np.ndarray:
        return image_features(image, self.input_size)

    def target_vector(self, grid: VoxelGrid) -> np.ndarray:
        if grid.dims != self.dims:
            raise InvalidInputError(f"target grid dims {grid.dims} != model dims {self.dims}")
        return grid.flat().astype(np.float64)

    def predict_features(self, x: np.ndarray) -> np.ndarray:
        return _sigmoid(np.atleast_2d(x) @ self.weights)

    def _grid(self, occ: np.ndarray) -> VoxelGrid:
        return VoxelGrid.from_flat(occ, self.dims, self.bounds.min, self.bounds.extent / np.array(self.dims))

    def reconstruct(self, image: Image) -> VoxelGrid:
        return self._grid(self.predict_features(self.features(image))[0])

    def loss(self, x: np.ndarray, y: np.ndarray) -> float:
        return _bce(self.predict_features(x), y)

    def step_arrays(self, x: np.ndarray, y: np.ndarray, learning_rate: float) -> float:
        """One SGD step on feature rows ``x`` and target rows ``y``; returns the pre-step loss."""
        p = self.predict_features(x)
        loss = _bce(p, y)
        if learning_rate:
            self.weights -= (learning_rate / len(x)) * (x.T @ (p - y))
        return loss

    def fit_step(self, batch, learning_rate: float) -> float:
        if not batch:
            raise InvalidInputError("empty batch")
        x = np.array([self.features(img) for img, _ in batch])
        y = np.array([self.target_vector(g) for _, g in batch])
        return self.step_arrays(x, y, learning_rate)

    def snapshot(self) -> np.ndarray:
        return self.weights.copy()

    def restore(self, snap: np.ndarray) -> None:
        snap = np.asarray(snap, dtype=np.float64)
        if snap.shape != self.weights.shape:
            raise InvalidInputError(f"snapshot shape {snap.shape} != {self.weights.shape}")
        self.weights = snap.copy()

    def copy(self) -> ToyRegressor:
        out = ToyRegressor(self.input_size, self.dims, self.bounds)
        out.weights = self.weights.copy()
        return out


def toy_reconstruct(model: ToyRegressor, image: Image) -> VoxelGrid:
    return model.reconstruct(image)


def save_toy(path, model: ToyRegressor) -> None:
    head = _HEAD.pack(MAGIC, VERSION, model.input_size, *model.dims, *model.bounds.min, *model.bounds.max)
    Path(path).write_bytes(head + model.weights.astype("<f8").tobytes())


def load_toy(path) -> ToyRegressor:
    data = Path(path).read_bytes()
    if len(data) < _HEAD.size:
        raise FormatError(f"{path}: truncated TOY1 header")
    magic, version, size, nx, ny, nz, *b = _HEAD.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported TOY1 version {version}")
    model = ToyRegressor(size, (nx, ny, nz), Aabb(np.array(b[:3]), np.array(b[3:])))
    expect = model.weights.size * 8
    if len(data) - _HEAD.size != expect:
        raise FormatError(f"{path}: expected {expect} parameter bytes, got {len(data) - _HEAD.size}")
    model.weights = np.frombuffer(data, dtype="<f8", offset=_HEAD.size).reshape(model.weights.shape).copy()
    return model


@dataclass(frozen=True)
class LrSchedule:
    initial: float = 1e-2
    factor: float = 0.5
    period: int = 5

    def __post_init__(self):
        if self.initial < 0 or not 0 < self.factor <= 1 or self.period < 1:
            raise InvalidConfigError("lr schedule needs initial >= 0, factor in (0, 1], period >= 1")

    def rate(self, epoch: int) -> float:
        return self.initial * self.factor ** (epoch // self.period)


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    lr: float
    train_loss: float


def encode_dataset(model: ToyRegressor, dataset) -> tuple[np.ndarray, np.ndarray]:
    x = np.array([model.features(img) for img, _ in dataset])
    y = np.array([model.target_vector(g) for _, g in dataset])
    return x, y


def toy_fit(model: ToyRegressor, dataset, epochs: int = 10, batch_size: int = 32,
            lr_schedule: LrSchedule = LrSchedule(), seed: int = 0, encoded=None, on_epoch=None) -> list[EpochLog]:
    """Seeded minibatch SGD; returns the mean training loss seen during each epoch.

    ``encoded`` may carry precomputed ``(features, targets)`` for ``dataset``.
    ``on_epoch(epoch, model)`` runs after every epoch.
    """
    if epochs < 0 or batch_size < 1:
        raise InvalidConfigError("epochs >= 0 and batch_size >= 1 required")
    x, y = encoded if encoded is not None else encode_dataset(model, dataset)
    if len(x) == 0:
        raise InvalidInputError("empty training set")
    rng = np.random.default_rng(seed)
    log = []
    for epoch in range(epochs):
        lr = lr_schedule.rate(epoch)
        order = rng.permutation(len(x))
        total = 0.0
        for s in range(0, len(x), batch_size):
            idx = order[s:s + batch_size]
            total += model.step_arrays(x[idx], y[idx], lr) * len(idx)
        log.append(EpochLog(epoch, lr, total / len(x)))
        if on_epoch is not None:
            on_epoch(epoch, model)
    return log


def mean_loss(model: ToyRegressor, x: np.ndarray, y: np.ndarray, batch: int = 256) -> float:
    if len(x) == 0:
        return math.nan
    total = sum(model.loss(x[s:s + batch], y[s:s + batch]) * len(x[s:s + batch]) for s in range(0, len(x), batch))
    return total / len(x)
