"""Desk-scale frontal-bias and bootstrap benchmark on synthetic faces.

Training faces depend on the run seed; the held-out faces and their test
poses are fixed, so every seed and every yaw set is scored on the same
benchmark. A toy model is first trained on near-frontal photos only, then
fine-tuned on pairs it generates from the frontal photos of its own
training faces.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._parallel import parallel_map
from .bootstrap import BootstrapConfig, FineTuneResult, fine_tune, generate_pairs, split_pairs
from .geometry.marching_cubes import marching_cubes
from .geometry.mesh import Aabb, TriangleMesh
from .geometry.io import write_obj, write_vxg
from .geometry.voxelize import voxelize
from .metrics.report import EvalPair, NmeReport, evaluate_pair
from .recon.synthetic import SyntheticFaceSpec, face_photo, generate_synthetic_face
from .recon.toy import LrSchedule, ToyRegressor, toy_fit
from .render import Camera, Image, write_ppm
from .viewgen import RigidTransform, apply_transform, yaw_pitch_rotation

log = logging.getLogger(__name__)

HELDOUT_SEED_BASE = 1_000_000
TRAIN_SEED_STRIDE = 10_000
ABS_BUCKETS = ((0.0, 20.0), (20.0, 40.0), (40.0, 60.0))
YAW_SETS = {
    "20": (-20.0, 20.0),
    "20-40": (-40.0, -20.0, 20.0, 40.0),
    "20-40-60": (-60.0, -40.0, -20.0, 20.0, 40.0, 60.0),
}


@dataclass(frozen=True)
class ExperimentConfig:
    n_train_faces: int = 60
    train_yaws: tuple[float, ...] = (-10.0, 0.0, 10.0)
    n_heldout_faces: int = 20
    test_yaws: tuple[float, ...] = tuple(float(y) for y in range(-60, 61, 10))
    image_size: int = 128
    input_size: int = 16
    grid_dims: tuple[int, int, int] = (24, 24, 24)
    grid_half_extent: float = 0.85
    bias_epochs: int = 30
    bias_lr: float = 0.01
    batch_size: int = 32
    finetune_epochs: int = 10
    finetune_lr: float = 0.01
    lr_factor: float = 0.5
    lr_period: int = 5
    split_ratio: float = 0.9
    include_frontal: bool = False
    align: bool = False
    head: bool = True

    @property
    def camera(self) -> Camera:
        return Camera(image_size=(self.image_size, self.image_size))

    @property
    def bounds(self) -> Aabb:
        return Aabb.cube(self.grid_half_extent)

    def bootstrap_config(self, yaw_set, seed: int) -> BootstrapConfig:
        return BootstrapConfig(yaw_set=tuple(yaw_set), pitch_limit_deg=0.0, split_ratio=self.split_ratio,
                               epochs=self.finetune_epochs, batch_size=self.batch_size,
                               lr_initial=self.finetune_lr, lr_factor=self.lr_factor, lr_period=self.lr_period,
                               seed=seed, grid_dims=self.grid_dims, grid_half_extent=self.grid_half_extent,
                               include_frontal=self.include_frontal)


def yaw_transform(yaw_deg: float, pitch_deg: float = 0.0) -> RigidTransform:
    # synthetic faces are centred at the origin
    return RigidTransform.about(yaw_pitch_rotation(yaw_deg, pitch_deg), np.zeros(3))


def train_face_seeds(cfg: ExperimentConfig, seed: int) -> list[int]:
    return [seed * TRAIN_SEED_STRIDE + k for k in range(cfg.n_train_faces)]


def heldout_face_seeds(cfg: ExperimentConfig) -> list[int]:
    return [HELDOUT_SEED_BASE + k for k in range(cfg.n_heldout_faces)]


def face(seed: int) -> TriangleMesh:
    return generate_synthetic_face(SyntheticFaceSpec.random(seed))


@dataclass(eq=False)
class TestCase:
    id: str
    image: Image
    gt: TriangleMesh
    yaw_deg: float


def heldout_cases(cfg: ExperimentConfig, threads: int | None = None) -> list[TestCase]:
    cam = cfg.camera

    def one(s):
        f = face(s)
        return [TestCase(f"{s}_{yaw:+04.0f}", face_photo(f, cam, s, yaw_transform(yaw), head=cfg.head),
                         apply_transform(f, yaw_transform(yaw)), yaw) for yaw in cfg.test_yaws]

    return [c for chunk in parallel_map(one, heldout_face_seeds(cfg), threads) for c in chunk]


def frontal_dataset(cfg: ExperimentConfig, seed: int, threads: int | None = None):
    """Near-frontal (photo, volume) pairs of the seed's training faces."""
    cam = cfg.camera

    def one(s):
        f = face(s)
        return [(face_photo(f, cam, s, yaw_transform(y), head=cfg.head),
                 voxelize(apply_transform(f, yaw_transform(y)), cfg.grid_dims, cfg.bounds, smooth=True))
                for y in cfg.train_yaws]

    return [p for chunk in parallel_map(one, train_face_seeds(cfg, seed), threads) for p in chunk]


def train_biased_model(cfg: ExperimentConfig, seed: int, threads: int | None = None) -> ToyRegressor:
    model = ToyRegressor(cfg.input_size, cfg.grid_dims, cfg.bounds)
    data = frontal_dataset(cfg, seed, threads)
    toy_fit(model, data, cfg.bias_epochs, cfg.batch_size, LrSchedule(cfg.bias_lr, cfg.lr_factor, cfg.lr_period),
            seed=seed)
    return model


def evaluate_model(model, cases: list[TestCase], align: bool = False, threads: int | None = None) -> NmeReport:
    def one(c: TestCase):
        pred = marching_cubes(model.reconstruct(c.image))
        return evaluate_pair(EvalPair(c.id, pred, c.gt, c.yaw_deg), align=align, d_mode="landmark")

    return NmeReport(parallel_map(one, cases, threads))


def abs_bucket_means(report: NmeReport) -> list[float]:
    """Mean NME per |yaw| bucket; the last bucket includes its upper edge."""
    out = []
    for lo, hi in ABS_BUCKETS:
        top = hi + 1e-9 if hi == ABS_BUCKETS[-1][1] else hi
        out.append(report.bucket_mean(lo, top))
    return out


def spread_ratio(means) -> float:
    return float(max(means) / min(means))


@dataclass(eq=False)
class BootstrapRun:
    seed: int
    yaw_set: tuple[float, ...]
    n_pairs: int
    before: NmeReport
    after: NmeReport
    finetune: FineTuneResult


def run_bootstrap(cfg: ExperimentConfig, seed: int, yaw_set, biased: ToyRegressor, cases: list[TestCase],
                  before: NmeReport | None = None, threads: int | None = None, snapshot_dir=None) -> BootstrapRun:
    """Fine-tune a copy of ``biased`` on its own pairs and score it before and after."""
    model = biased.copy()
    if before is None:
        before = evaluate_model(model, cases, cfg.align, threads)
    bcfg = cfg.bootstrap_config(yaw_set, seed)
    seeds = train_face_seeds(cfg, seed)
    cam = cfg.camera
    frontal = parallel_map(lambda s: face_photo(face(s), cam, s, head=cfg.head), seeds, threads)
    pairs = generate_pairs(model, frontal, bcfg, cam, source_ids=[str(s) for s in seeds], threads=threads)
    train, val = split_pairs(pairs, bcfg.split_ratio, seed)
    ft = fine_tune(model, train, val, bcfg, snapshot_dir)
    after = evaluate_model(model, cases, cfg.align, threads)
    return BootstrapRun(seed, tuple(yaw_set), len(pairs), before, after, ft)


@dataclass(eq=False)
class ExperimentSummary:
    seeds: tuple[int, ...]
    before: dict[int, list[float]]                                  # seed -> bucket means
    before_mean: dict[int, float]
    after: dict[str, dict[int, list[float]]] = field(default_factory=dict)   # yaw-set name -> seed -> buckets
    after_mean: dict[str, dict[int, float]] = field(default_factory=dict)
    runs: list[BootstrapRun] = field(default_factory=list)
    seconds: float = 0.0

    def avg_before(self) -> list[float]:
        return list(np.mean([self.before[s] for s in self.seeds], axis=0))

    def avg_after(self, name: str) -> list[float]:
        return list(np.mean([self.after[name][s] for s in self.seeds], axis=0))

    def avg_mean_before(self) -> float:
        return float(np.mean([self.before_mean[s] for s in self.seeds]))

    def avg_mean_after(self, name: str) -> float:
        return float(np.mean([self.after_mean[name][s] for s in self.seeds]))

    def rows(self) -> list[list]:
        out = [["stage", "yaw_set", "seed", "nme_0_20", "nme_20_40", "nme_40_60", "nme_mean"]]
        for s in self.seeds:
            out.append(["before", "", s, *self.before[s], self.before_mean[s]])
        for name in self.after:
            for s in self.seeds:
                out.append(["after", name, s, *self.after[name][s], self.after_mean[name][s]])
        return out


def run_experiment(cfg: ExperimentConfig, seeds=(0, 1, 2), yaw_sets: dict | None = None,
                   threads: int | None = None) -> ExperimentSummary:
    yaw_sets = YAW_SETS if yaw_sets is None else yaw_sets
    t0 = time.perf_counter()
    cases = heldout_cases(cfg, threads)
    summary = ExperimentSummary(tuple(seeds), {}, {})
    for seed in seeds:
        biased = train_biased_model(cfg, seed, threads)
        before = evaluate_model(biased, cases, cfg.align, threads)
        summary.before[seed] = abs_bucket_means(before)
        summary.before_mean[seed] = before.mean
        log.info("seed %d before %s", seed, summary.before[seed])
        for name, ys in yaw_sets.items():
            run = run_bootstrap(cfg, seed, ys, biased, cases, before, threads)
            summary.after.setdefault(name, {})[seed] = abs_bucket_means(run.after)
            summary.after_mean.setdefault(name, {})[seed] = run.after.mean
            summary.runs.append(run)
            log.info("seed %d yaw set %s after %s", seed, name, summary.after[name][seed])
    summary.seconds = time.perf_counter() - t0
    return summary


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **kw)


FACE_MANIFEST_HEADER = ["image", "grid", "mesh", "yaw_deg", "pitch_deg", "face_seed"]


def write_face_dataset(out_dir, face_seeds, camera: Camera, yaws=(0.0,), dims=(64, 64, 64),
                       half_extent: float = 0.85, extra_header: dict | None = None) -> Path:
    """Synthetic photos with their posed meshes (OBJ plus landmarks) and
    volumes; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bounds = Aabb.cube(half_extent)
    manifest = out / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        for k, v in (extra_header or {}).items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FACE_MANIFEST_HEADER)
        for s in face_seeds:
            f = face(s)
            for yaw in yaws:
                t = yaw_transform(yaw)
                posed = apply_transform(f, t)
                stem = f"face{s:06d}_y{yaw:+04.0f}"
                write_ppm(out / f"{stem}.ppm", face_photo(f, camera, s, t))
                write_obj(out / f"{stem}.obj", posed)
                write_vxg(out / f"{stem}.vxg", voxelize(posed, dims, bounds, smooth=True))
                w.writerow([f"{stem}.ppm", f"{stem}.vxg", f"{stem}.obj", repr(float(yaw)), "0.0", s])
    return manifest
