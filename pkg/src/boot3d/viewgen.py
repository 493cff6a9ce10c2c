"""Rigid-body transforms and the constrained yaw/pitch view lattice.

Camera convention: the camera sits on +z looking down -z with +y up. Yaw
rotates about the camera y axis, pitch about the camera x axis, both through
the face centroid; a view is ``Ry(yaw) @ Rx(pitch)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InvalidConfigError, InvalidInputError
from .geometry.mesh import TriangleMesh
from .pose import FaceFrame, axis_angle_deg

TOWARD_CAMERA = np.array([0.0, 0.0, 1.0])
_ANGLE_EPS = 1e-9


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise InvalidInputError("transform has non-finite entries")
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-10 or abs(np.linalg.det(r) - 1.0) > 1e-10:
            raise InvalidInputError("rotation is not a proper orthonormal matrix")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.rotation, np.eye(3)) and not np.any(self.translation))

    def to_row(self) -> list[float]:
        return [float(x) for x in self.rotation.ravel()] + [float(x) for x in self.translation]

    @classmethod
    def from_row(cls, row) -> RigidTransform:
        r = np.asarray(row, dtype=np.float64)
        if r.size != 12:
            raise FormatError("transform row needs 12 numbers")
        return cls(r[:9].reshape(3, 3), r[9:])

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls()

    @classmethod
    def about(cls, rotation: np.ndarray, center) -> RigidTransform:
        """Rotation about ``center`` (a point that stays fixed)."""
        c = np.asarray(center, dtype=np.float64)
        rotation = np.asarray(rotation, dtype=np.float64)
        return cls(rotation, c - rotation @ c)


def rot_x(deg: float) -> np.ndarray:
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(deg: float) -> np.ndarray:
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def yaw_pitch_rotation(yaw_deg: float, pitch_deg: float) -> np.ndarray:
    return rot_y(yaw_deg) @ rot_x(pitch_deg)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """``a ∘ b``: apply ``b`` first, then ``a``."""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def inverse(t: RigidTransform) -> RigidTransform:
    rt = t.rotation.T
    return RigidTransform(rt, -(rt @ t.translation))


def apply_transform(mesh: TriangleMesh, t: RigidTransform) -> TriangleMesh:
    if t.is_identity():
        return mesh.copy()
    return mesh.with_vertices(t.apply(mesh.vertices))


@dataclass(frozen=True)
class ViewEntry:
    yaw_deg: float
    pitch_deg: float
    transform: RigidTransform


@dataclass(frozen=True)
class ViewSchedule:
    entries: tuple[ViewEntry, ...]
    increment_deg: float = 10.0
    pitch_limit_deg: float = 20.0
    gaze_limit_deg: float = 90.0

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i) -> ViewEntry:
        return self.entries[i]


def gaze_camera_angle(gaze, rotation: np.ndarray | None = None) -> float:
    g = np.asarray(gaze, dtype=np.float64)
    if rotation is not None:
        g = rotation @ g
    return axis_angle_deg(g, TOWARD_CAMERA)


def _is_multiple(value: float, step: float) -> bool:
    k = value / step
    return abs(k - round(k)) < 1e-9


def _lattice(limit: float, step: float) -> list[float]:
    n = int(math.floor(limit / step + 1e-9))
    return [k * step for k in range(-n, n + 1)]


def build_schedule(frame: FaceFrame, increment_deg: float = 10.0, pitch_limit_deg: float = 20.0,
                   gaze_limit_deg: float = 90.0, yaw_set=None) -> ViewSchedule:
    """Every (yaw, pitch) lattice view whose pitch stays within the pitch limit
    and whose rotated gaze stays within ``gaze_limit_deg`` of the direction
    toward the camera. The untransformed view (0, 0) is excluded."""
    if not increment_deg > 0:
        raise InvalidConfigError(f"increment must be positive, got {increment_deg}")
    if pitch_limit_deg < 0 or gaze_limit_deg < 0:
        raise InvalidConfigError("angle limits must be non-negative")
    if yaw_set is None:
        n = int(math.floor(180.0 / increment_deg + 1e-9))
        yaws = [k * increment_deg for k in range(-n, n + 1) if -180.0 < k * increment_deg <= 180.0]
    else:
        yaws = sorted({float(y) for y in yaw_set})
        bad = [y for y in yaws if not _is_multiple(y, increment_deg)]
        if bad:
            raise InvalidConfigError(f"yaw_set values {bad} are not multiples of {increment_deg}")
    pitches = _lattice(pitch_limit_deg, increment_deg)
    entries = []
    for yaw in yaws:
        for pitch in pitches:
            if yaw == 0 and pitch == 0:
                continue
            rot = yaw_pitch_rotation(yaw, pitch)
            if gaze_camera_angle(frame.gaze, rot) > gaze_limit_deg + _ANGLE_EPS:
                continue
            entries.append(ViewEntry(float(yaw), float(pitch), RigidTransform.about(rot, frame.centroid)))
    return ViewSchedule(tuple(entries), float(increment_deg), float(pitch_limit_deg), float(gaze_limit_deg))


def explicit_schedule(frame: FaceFrame, views) -> ViewSchedule:
    """Schedule from explicit (yaw, pitch) pairs, without lattice or gaze filtering."""
    entries = tuple(ViewEntry(float(y), float(p), RigidTransform.about(yaw_pitch_rotation(y, p), frame.centroid))
                    for y, p in views)
    return ViewSchedule(entries)


SCHEDULE_HEADER = ["yaw_deg", "pitch_deg"] + [f"r{i}{j}" for i in range(3) for j in range(3)] + ["tx", "ty", "tz"]


def write_schedule_csv(path, schedule: ViewSchedule) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCHEDULE_HEADER)
        for e in schedule:
            w.writerow([repr(e.yaw_deg), repr(e.pitch_deg)] + [repr(x) for x in e.transform.to_row()])


def read_schedule_csv(path, increment_deg=10.0, pitch_limit_deg=20.0, gaze_limit_deg=90.0) -> ViewSchedule:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != SCHEDULE_HEADER:
        raise FormatError(f"{path}: not a schedule CSV")
    entries = tuple(ViewEntry(float(r[0]), float(r[1]), RigidTransform.from_row([float(x) for x in r[2:]]))
                    for r in rows[1:])
    return ViewSchedule(entries, increment_deg, pitch_limit_deg, gaze_limit_deg)

