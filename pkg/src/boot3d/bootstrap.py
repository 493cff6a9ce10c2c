"""Self-supervised pair synthesis, fine-tuning and the self-reconstruction test.

A reconstruction of a frontal image is rotated, re-rendered in front of a
backplane carrying the original image, and voxelized; the (render, volume)
pair becomes new training data for the same reconstructor.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._parallel import parallel_map
from .errors import Boot3dError, FormatError, InvalidConfigError, InvalidInputError
from .geometry.bvh import build_bvh
from .geometry.grid import VoxelGrid
from .geometry.io import read_vxg, write_vxg
from .geometry.marching_cubes import marching_cubes
from .geometry.mesh import Aabb, TriangleMesh, mesh_bounds
from .geometry.voxelize import voxelize
from .metrics.distance import interocular_distance, nme, proxy_interocular
from .metrics.report import NmeReport, NmeRow
from .pose import FaceFrame, estimate_face_frame
from .recon.base import observe
from .recon.toy import LrSchedule, ToyRegressor, encode_dataset, mean_loss, save_toy, toy_fit
from .render import Camera, Image, make_backplane, project_colors, rasterize, read_ppm, write_ppm
from .viewgen import RigidTransform, ViewSchedule, apply_transform, build_schedule, inverse

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BootstrapConfig:
    yaw_set: tuple[float, ...] = (-60.0, -40.0, -20.0, 20.0, 40.0, 60.0)
    pitch_limit_deg: float = 0.0
    increment_deg: float = 10.0
    gaze_limit_deg: float = 90.0
    split_ratio: float = 0.9
    epochs: int = 10
    batch_size: int = 32
    lr_initial: float = 1e-2
    lr_factor: float = 0.5
    lr_period: int = 5
    seed: int = 0
    grid_dims: tuple[int, int, int] = (24, 24, 24)
    grid_half_extent: float = 0.85
    smooth_targets: bool = True
    include_frontal: bool = False

    def __post_init__(self):
        object.__setattr__(self, "yaw_set", tuple(sorted(float(y) for y in self.yaw_set)))
        object.__setattr__(self, "grid_dims", tuple(int(d) for d in self.grid_dims))
        self.validate()

    def validate(self) -> None:
        if not 0.0 < self.split_ratio < 1.0:
            raise InvalidConfigError(f"split_ratio must lie in (0, 1), got {self.split_ratio}")
        if not self.increment_deg > 0:
            raise InvalidConfigError("increment_deg must be positive")
        for y in self.yaw_set:
            k = y / self.increment_deg
            if abs(k - round(k)) > 1e-9:
                raise InvalidConfigError(f"yaw {y} is not a multiple of the {self.increment_deg} deg increment")
        if self.epochs < 0 or self.batch_size < 1:
            raise InvalidConfigError("epochs >= 0 and batch_size >= 1 required")
        if len(self.grid_dims) != 3 or min(self.grid_dims) < 2 or not self.grid_half_extent > 0:
            raise InvalidConfigError("grid dims >= 2 and a positive half extent required")
        LrSchedule(self.lr_initial, self.lr_factor, self.lr_period)

    @property
    def lr_schedule(self) -> LrSchedule:
        return LrSchedule(self.lr_initial, self.lr_factor, self.lr_period)

    @property
    def grid_bounds(self) -> Aabb:
        return Aabb.cube(self.grid_half_extent)


@dataclass(eq=False)
class TrainingPair:
    image: Image
    target: VoxelGrid
    source_id: str
    transform: RigidTransform
    yaw_deg: float
    pitch_deg: float

    @property
    def id(self) -> str:
        return f"{self.source_id}_y{self.yaw_deg:+04.0f}_p{self.pitch_deg:+03.0f}"


@dataclass(eq=False)
class SourceScene:
    """Everything derived from one frontal image before any rotation."""
    image: Image
    mesh: TriangleMesh          # reconstructed, colored from the image
    frame: FaceFrame
    backplane: TriangleMesh


def prepare_source(reconstructor, image: Image, camera: Camera) -> SourceScene:
    mesh = marching_cubes(reconstructor.reconstruct(image))
    frame = estimate_face_frame(mesh)
    colored = project_colors(mesh, image, camera)
    backplane = make_backplane(frame, mesh_bounds(mesh), image, camera)
    return SourceScene(image, colored, frame, backplane)


def render_view(scene: SourceScene, transform: RigidTransform, camera: Camera) -> tuple[TriangleMesh, Image]:
    moved = apply_transform(scene.mesh, transform)
    return moved, rasterize([moved, scene.backplane], camera).image


def _pairs_for_image(reconstructor, image: Image, source_id: str, config: BootstrapConfig,
                     camera: Camera) -> list[TrainingPair]:
    try:
        scene = prepare_source(reconstructor, image, camera)
    except Boot3dError as exc:
        log.warning("skipping source %s: %s: %s", source_id, exc.code, exc)
        return []
    schedule = build_schedule(scene.frame, config.increment_deg, config.pitch_limit_deg,
                              config.gaze_limit_deg, config.yaw_set)
    out = []
    for entry in schedule:
        moved, rendered = render_view(scene, entry.transform, camera)
        try:
            target = voxelize(moved, config.grid_dims, config.grid_bounds, smooth=config.smooth_targets)
        except Boot3dError as exc:
            log.warning("skipping %s yaw %g: %s", source_id, entry.yaw_deg, exc)
            continue
        out.append(TrainingPair(rendered, target, source_id, entry.transform, entry.yaw_deg, entry.pitch_deg))
    if config.include_frontal:
        target = voxelize(scene.mesh, config.grid_dims, config.grid_bounds, smooth=config.smooth_targets)
        out.append(TrainingPair(image, target, source_id, RigidTransform.identity(), 0.0, 0.0))
    return out


def generate_pairs(reconstructor, frontal_images, config: BootstrapConfig, camera: Camera,
                   source_ids=None, threads: int | None = None) -> list[TrainingPair]:
    """Image-major, schedule-ordered (render, volume) pairs; failing sources are skipped."""
    images = list(frontal_images)
    ids = list(source_ids) if source_ids is not None else [f"src{i:04d}" for i in range(len(images))]
    if len(ids) != len(images):
        raise InvalidInputError("source_ids and images differ in length")
    chunks = parallel_map(lambda k: _pairs_for_image(reconstructor, images[k], ids[k], config, camera),
                          range(len(images)), threads)
    return [p for chunk in chunks for p in chunk]


def split_pairs(pairs, ratio: float = 0.9, seed: int = 0):
    """Seeded split by source image, so every source lands on one side only."""
    pairs = list(pairs)
    if not pairs:
        raise InvalidInputError("nothing to split")
    if not 0.0 < ratio < 1.0:
        raise InvalidConfigError(f"split ratio must lie in (0, 1), got {ratio}")
    groups = sorted({p.source_id for p in pairs})
    order = np.random.default_rng(seed).permutation(len(groups))
    n_train = min(len(groups), max(1, int(round(ratio * len(groups)))))
    train_ids = {groups[i] for i in order[:n_train]}
    train = [p for p in pairs if p.source_id in train_ids]
    val = [p for p in pairs if p.source_id not in train_ids]
    return train, val


@dataclass(frozen=True)
class FineTuneEpoch:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float


@dataclass(eq=False)
class FineTuneResult:
    log: list[FineTuneEpoch]
    best_epoch: int                  # 1-based; 0 means the untouched model
    best: np.ndarray
    epoch10: np.ndarray | None
    snapshot_paths: list[Path] = field(default_factory=list)

    def write_log_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "lr", "train_loss", "val_loss"])
            for e in self.log:
                w.writerow([e.epoch, repr(e.lr), repr(e.train_loss), repr(e.val_loss)])


def fine_tune(model: ToyRegressor, train, val, config: BootstrapConfig, snapshot_dir=None) -> FineTuneResult:
    """SGD on ``train`` with the configured schedule; the model ends on the best-val snapshot.

    Epochs are 1-based in the log. With ``snapshot_dir`` every epoch is saved
    as ``epoch_NNN.toy``; in memory only the best-validation and epoch-10
    parameters are kept (a toy snapshot is tens of megabytes).
    """
    train = list(train)
    val = list(val)
    if not train and config.epochs > 0:
        raise InvalidInputError("no training pairs")
    enc_train = encode_dataset(model, [(p.image, p.target) for p in train]) if train else None
    enc_val = encode_dataset(model, [(p.image, p.target) for p in val]) if val else None
    val_loss0 = mean_loss(model, *enc_val) if enc_val else math.nan
    best, best_epoch, best_val = model.snapshot(), 0, val_loss0
    state = {"epoch10": None, "paths": [], "rows": []}
    out_dir = Path(snapshot_dir) if snapshot_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    def on_epoch(epoch, m):
        nonlocal best, best_epoch, best_val
        vl = mean_loss(m, *enc_val) if enc_val else math.nan
        state["rows"].append(vl)
        if epoch + 1 == 10:
            state["epoch10"] = m.snapshot()
        if out_dir is not None:
            path = out_dir / f"epoch_{epoch + 1:03d}.toy"
            save_toy(path, m)
            state["paths"].append(path)
        # NaN compares false, so without validation data the last epoch wins
        if not vl >= best_val:
            best, best_epoch, best_val = m.snapshot(), epoch + 1, vl

    fit_log = toy_fit(model, None, config.epochs, config.batch_size, config.lr_schedule, config.seed,
                      encoded=enc_train, on_epoch=on_epoch) if config.epochs > 0 else []
    rows = [FineTuneEpoch(e.epoch + 1, e.lr, e.train_loss, v) for e, v in zip(fit_log, state["rows"])]
    model.restore(best)
    return FineTuneResult(rows, best_epoch, best, state["epoch10"], state["paths"])


# --- self-reconstruction ------------------------------------------------------

@dataclass(frozen=True)
class ScheduleSpec:
    """Schedule parameters; the schedule itself depends on each source's frame."""
    increment_deg: float = 10.0
    pitch_limit_deg: float = 20.0
    gaze_limit_deg: float = 90.0
    yaw_set: tuple[float, ...] | None = None

    def build(self, frame: FaceFrame) -> ViewSchedule:
        return build_schedule(frame, self.increment_deg, self.pitch_limit_deg, self.gaze_limit_deg, self.yaw_set)


def _normaliser(mesh: TriangleMesh, frame: FaceFrame) -> tuple[float, str]:
    try:
        return interocular_distance(mesh), ""
    except Boot3dError:
        return proxy_interocular(mesh, frame.lateral), "proxy-d"


def _self_recon_image(reconstructor, k: int, image: Image, schedule, camera: Camera) -> list[NmeRow]:
    sid = f"{k:04d}"
    try:
        scene = prepare_source(reconstructor, image, camera)
        d, dflag = _normaliser(scene.mesh, scene.frame)
        index = build_bvh(scene.mesh)
    except Boot3dError as exc:
        return [NmeRow(f"{sid}_src", 0.0, 0.0, math.nan, False, exc.code)]
    sched = schedule.build(scene.frame) if isinstance(schedule, ScheduleSpec) else schedule
    rows = []
    for j, entry in enumerate(sched):
        rid = f"{sid}_{j:03d}"
        flags = [dflag] if dflag else []
        try:
            moved, rendered = render_view(scene, entry.transform, camera)
            observe(reconstructor, rendered, moved)
            m1 = marching_cubes(reconstructor.reconstruct(rendered))
            if m1.n_vertices == 0:
                raise InvalidInputError("second reconstruction has no surface")
            back = apply_transform(m1, inverse(entry.transform))
            value = nme(back, index, d)
        except Boot3dError as exc:
            flags.append(exc.code)
            value = math.nan
        rows.append(NmeRow(rid, entry.yaw_deg, entry.pitch_deg, value, False, ";".join(flags)))
    return rows


def self_reconstruction_experiment(reconstructor, images, schedule, camera: Camera,
                                   threads: int | None = None) -> NmeReport:
    """Reconstruct, rotate, render, reconstruct again, undo the rotation, compare.

    ``schedule`` is a fixed ViewSchedule or a ScheduleSpec built per source
    from its estimated frame. The error of each view is the NME of the
    back-rotated second reconstruction against the first one, with d from
    the first one.
    """
    images = list(images)
    if not images:
        raise InvalidInputError("no images")
    chunks = parallel_map(lambda k: _self_recon_image(reconstructor, k, images[k], schedule, camera),
                          range(len(images)), threads)
    return NmeReport([r for c in chunks for r in c])


# --- pair datasets on disk ----------------------------------------------------

MANIFEST_HEADER = ["id", "source_id", "yaw_deg", "pitch_deg", "image", "grid"] + \
    [f"r{i}{j}" for i in range(3) for j in range(3)] + ["tx", "ty", "tz"]


def write_pair_dataset(out_dir, pairs, extra_header: dict | None = None) -> Path:
    """Per-pair PPM and VXG1 files plus ``manifest.csv``; returns the manifest path."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "grids").mkdir(parents=True, exist_ok=True)
    manifest = out / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for k, v in (extra_header or {}).items():
            fh.write(f"# {k}={v}\n")
        w.writerow(MANIFEST_HEADER)
        for n, p in enumerate(pairs):
            stem = f"{n:06d}"
            write_ppm(out / "images" / f"{stem}.ppm", p.image)
            write_vxg(out / "grids" / f"{stem}.vxg", p.target)
            w.writerow([p.id, p.source_id, repr(p.yaw_deg), repr(p.pitch_deg), f"images/{stem}.ppm",
                        f"grids/{stem}.vxg"] + [repr(x) for x in p.transform.to_row()])
    return manifest


def read_pair_dataset(path) -> list[TrainingPair]:
    root = Path(path)
    manifest = root / "manifest.csv" if root.is_dir() else root
    root = manifest.parent
    with open(manifest, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    if not rows or rows[0] != MANIFEST_HEADER:
        raise FormatError(f"{manifest}: not a pair manifest")
    out = []
    for r in rows[1:]:
        t = RigidTransform.from_row([float(x) for x in r[6:18]])
        out.append(TrainingPair(read_ppm(root / r[4]), read_vxg(root / r[5]), r[1], t, float(r[2]), float(r[3])))
    return out
