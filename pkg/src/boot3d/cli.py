"""Command-line frontend: ``boot3d <subcommand> ...``.

Every subcommand writes a manifest next to its outputs listing the config
hash, the seed and a sha256 of each output file. Timestamps go to a
separate ``.log`` file so manifests stay byte-identical across reruns.
Failures print one line, ``error: <code>: <message>``, and exit with the
error's status (1 usage/config, 2 data, 3 numerical).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from ._parallel import resolve_threads
from .bootstrap import generate_pairs, self_reconstruction_experiment, write_pair_dataset
from .config import PipelineConfig, load_config
from .errors import Boot3dError, FormatError, InvalidConfigError, InvalidInputError
from .geometry.io import read_obj, read_vxg, write_obj
from .geometry.marching_cubes import marching_cubes
from .metrics.report import EvalPair, NmeReport, bar_chart_svg, evaluate_pairs
from .pose import estimate_face_frame
from .recon.oracle import OracleReconstructor
from .recon.synthetic import face_photo
from .recon.toy import load_toy, save_toy
from .render import project_colors, read_image, render_sweep, write_ppm
from .viewgen import build_schedule, write_schedule_csv

log = logging.getLogger("boot3d")

FRAME_HEADER = ["cx", "cy", "cz", "lx", "ly", "lz", "vx", "vy", "vz", "gx", "gy", "gz",
                "ev0", "ev1", "ev2", "tie"]


class UsageError(InvalidConfigError):
    code = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def bundled(name: str) -> Path:
    """Path of a file shipped in ``boot3d/data``."""
    return Path(str(resources.files("boot3d") / "data" / name))


# --- manifests --------------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_run_manifest(path: Path, command: str, cfg: PipelineConfig, seed, outputs, root: Path) -> None:
    """key,value rows, then one ``output,<relative path>,<sha256>`` row per file."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["key", "value", "sha256"])
        w.writerow(["command", command, ""])
        w.writerow(["boot3d_version", __version__, ""])
        w.writerow(["config_hash", cfg.hash, ""])
        w.writerow(["seed", seed, ""])
        for p in sorted(Path(o) for o in outputs):
            w.writerow(["output", p.relative_to(root).as_posix(), _sha256(p)])


def _log_times(path: Path, command: str, t0: float) -> None:
    stamp = time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime())
    with open(path, "a") as fh:
        fh.write(f"{stamp} {command} finished in {time.perf_counter() - t0:.2f} s\n")


def _finish_file(out: Path, command: str, cfg, seed, t0) -> None:
    write_run_manifest(Path(f"{out}.manifest.csv"), command, cfg, seed, [out], out.parent)
    _log_times(Path(f"{out}.log"), command, t0)


def _finish_dir(out: Path, command: str, cfg, seed, t0) -> None:
    files = [p for p in out.rglob("*") if p.is_file() and p.name not in ("run_manifest.csv", "run.log")]
    write_run_manifest(out / "run_manifest.csv", command, cfg, seed, files, out)
    _log_times(out / "run.log", command, t0)


# --- helpers ----------------------------------------------------------------

def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg.set("run.seed", args.seed)
    return cfg


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.replace(",", " ").split())
    except ValueError:
        raise UsageError(f"expected a list of numbers, got {text!r}") from None


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise InvalidInputError(f"{what} {path} does not exist")
    return path


def _image_files(folder: Path) -> list[Path]:
    _require(folder, "image directory")
    files = sorted(p for p in folder.iterdir() if p.suffix.lower() in (".ppm", ".png"))
    if not files:
        raise InvalidInputError(f"no .ppm or .png images in {folder}")
    return files


def _reconstructor(spec: str, cfg: PipelineConfig, image_files=()):
    """``oracle`` registers ``<stem>.obj`` next to every image; ``toy:<path>`` loads a model."""
    if spec == "oracle":
        rec = OracleReconstructor(tuple(cfg["grid.oracle_dims"]),
                                  bounds=_bounds(cfg["grid.half_extent"]))
        for p in image_files:
            mesh = p.with_suffix(".obj")
            if not mesh.exists():
                raise InvalidInputError(f"oracle needs {mesh.name} next to {p.name}")
            rec.register(read_image(p), read_obj(mesh))
        return rec
    if spec.startswith("toy:"):
        return load_toy(_require(Path(spec[4:]), "model"))
    raise UsageError(f"--recon must be 'oracle' or 'toy:<model.toy>', got {spec!r}")


def _bounds(half: float):
    from .geometry.mesh import Aabb
    return Aabb.cube(half)


# --- subcommands ------------------------------------------------------------

def cmd_init_config(args) -> None:
    out = Path(args.output)
    out.write_text(PipelineConfig().to_text(with_docs=True))


def cmd_extract_mesh(args) -> None:
    cfg = _config(args)
    t0 = time.perf_counter()
    grid = read_vxg(_require(Path(args.grid), "grid"))
    iso = cfg["grid.iso"] if args.iso is None else args.iso
    mesh = marching_cubes(grid, iso)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_obj(out, mesh)
    _finish_file(out, "extract-mesh", cfg, cfg["run.seed"], t0)
    print(f"{mesh.n_vertices} vertices, {mesh.n_triangles} triangles -> {out}")


def cmd_estimate_pose(args) -> None:
    cfg = _config(args)
    t0 = time.perf_counter()
    frame = estimate_face_frame(read_obj(_require(Path(args.mesh), "mesh")))
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FRAME_HEADER)
        w.writerow([repr(x) for x in frame.to_row()] + [repr(float(e)) for e in frame.eigenvalues]
                   + [int(frame.tie)])
    _finish_file(out, "estimate-pose", cfg, cfg["run.seed"], t0)


def cmd_render_sweep(args) -> None:
    cfg = _config(args)
    t0 = time.perf_counter()
    mesh = read_obj(_require(Path(args.mesh), "mesh"))
    image = read_image(_require(Path(args.image), "image"))
    cam = cfg.camera()
    frame = estimate_face_frame(mesh)
    pitch = cfg["schedule.pitch_limit"] if args.pitch_limit is None else args.pitch_limit
    yaw_set = _floats(args.yaw_set) if args.yaw_set else None
    sched = build_schedule(frame, cfg["schedule.increment"], pitch, cfg["schedule.gaze_limit"], yaw_set)
    colored = project_colors(mesh, image, cam)
    out = Path(args.output)
    (out / "views").mkdir(parents=True, exist_ok=True)
    write_schedule_csv(out / "schedule.csv", sched)
    for j, view in enumerate(render_sweep(colored, frame, image, sched, cam)):
        write_ppm(out / "views" / f"{j:03d}_y{view.yaw_deg:+04.0f}_p{view.pitch_deg:+03.0f}.ppm", view.image)
    _finish_dir(out, "render-sweep", cfg, cfg["run.seed"], t0)
    print(f"{len(sched)} views -> {out}")


def cmd_gen_pairs(args) -> None:
    cfg = _config(args)
    t0 = time.perf_counter()
    files = _image_files(Path(args.images))
    rec = _reconstructor(args.recon, cfg, files)
    bcfg = cfg.bootstrap_config()
    pairs = generate_pairs(rec, [read_image(p) for p in files], bcfg, cfg.camera(),
                           source_ids=[p.stem for p in files], threads=args.threads)
    out = Path(args.output)
    write_pair_dataset(out, pairs, {"config_hash": cfg.hash, "seed": cfg["run.seed"]})
    _finish_dir(out, "gen-pairs", cfg, cfg["run.seed"], t0)
    print(f"{len(pairs)} pairs from {len(files)} images -> {out}")


def _write_summary(out: Path, rows: list[list]) -> None:
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(rows[0])
        for r in rows[1:]:
            w.writerow([x if isinstance(x, str) else repr(x) for x in r])


def cmd_bootstrap_run(args) -> None:
    from .experiment import abs_bucket_means, evaluate_model, heldout_cases, run_bootstrap, train_biased_model

    cfg = _config(args)
    t0 = time.perf_counter()
    ecfg = cfg.experiment_config()
    seeds = [cfg["run.seed"]] if args.seed is not None else list(cfg["experiment.seeds"])
    yaw_set = cfg["bootstrap.yaw_set"]
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    cases = heldout_cases(ecfg, args.threads)
    rows = [["stage", "seed", "nme_0_20", "nme_20_40", "nme_40_60", "nme_mean"]]
    before_b, after_b = [], []
    for seed in seeds:
        sdir = out / f"seed_{seed}"
        sdir.mkdir(exist_ok=True)
        biased = train_biased_model(ecfg, seed, args.threads)
        save_toy(sdir / "biased.toy", biased)
        before = evaluate_model(biased, cases, ecfg.align, args.threads)
        run = run_bootstrap(ecfg, seed, yaw_set, biased, cases, before, args.threads, sdir / "snapshots")
        before.write_all(sdir, "before")
        run.after.write_all(sdir, "after")
        run.finetune.write_log_csv(sdir / "finetune_log.csv")
        b, a = abs_bucket_means(before), abs_bucket_means(run.after)
        before_b.append(b)
        after_b.append(a)
        rows.append(["before", seed, *b, before.mean])
        rows.append(["after", seed, *a, run.after.mean])
        log.info("seed %s: %d pairs, 40-60 bucket %.4f -> %.4f", seed, run.n_pairs, b[2], a[2])
    mb, ma = np.mean(before_b, axis=0), np.mean(after_b, axis=0)
    rows.append(["before", "mean", *[float(x) for x in mb], float(np.mean([r[5] for r in rows[1::2]]))])
    rows.append(["after", "mean", *[float(x) for x in ma], float(np.mean([r[5] for r in rows[2::2]]))])
    _write_summary(out / "summary.csv", rows)
    labels = [f"{p} {lo:g}-{hi:g}" for lo, hi in ((0, 20), (20, 40), (40, 60)) for p in ("pre", "post")]
    vals = [100.0 * v for pair in zip(mb, ma) for v in pair]
    (out / "summary_by_abs_yaw.svg").write_text(bar_chart_svg(labels, vals, "|yaw| bucket (deg)", "NME (%)"))
    _finish_dir(out, "bootstrap-run", cfg, " ".join(str(s) for s in seeds), t0)
    print(f"40-60 deg NME {100 * mb[2]:.2f}% -> {100 * ma[2]:.2f}% ({out / 'summary.csv'})")


def _poses_from_manifest(folder: Path) -> dict[str, tuple[float, float]]:
    manifest = folder / "manifest.csv"
    if not manifest.exists():
        return {}
    with open(manifest, newline="") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    if rows and not {"mesh", "yaw_deg", "pitch_deg"} <= set(rows[0]):
        raise FormatError(f"{manifest}: needs mesh, yaw_deg and pitch_deg columns")
    return {Path(r["mesh"]).stem: (float(r["yaw_deg"]), float(r["pitch_deg"])) for r in rows}


def cmd_evaluate(args) -> None:
    cfg = _config(args)
    t0 = time.perf_counter()
    pred_dir, gt_dir = _require(Path(args.pred), "pred directory"), _require(Path(args.gt), "gt directory")
    preds = {p.stem: p for p in pred_dir.glob("*.obj")}
    gts = {p.stem: p for p in gt_dir.glob("*.obj")}
    common = sorted(set(preds) & set(gts))
    if not common:
        raise InvalidInputError(f"no matching .obj names in {pred_dir} and {gt_dir}")
    poses = _poses_from_manifest(gt_dir)
    pairs = [EvalPair(k, read_obj(preds[k]), read_obj(gts[k]), *poses.get(k, (0.0, 0.0))) for k in common]
    report = evaluate_pairs(pairs, align=args.icp, d_mode="proxy", threads=args.threads)
    out = Path(args.output)
    report.write_all(out)
    _finish_dir(out, "evaluate", cfg, cfg["run.seed"], t0)
    print(f"{report.n_valid}/{len(report.rows)} valid, mean NME {100 * report.mean:.3f}%")


def cmd_self_recon(args) -> None:
    from .experiment import face

    cfg = _config(args)
    t0 = time.perf_counter()
    cam = cfg.camera()
    if args.images:
        files = _image_files(Path(args.images))
        rec = _reconstructor(args.recon, cfg, files)
        images = [read_image(p) for p in files]
    else:
        seed = cfg["run.seed"]
        faces = [(s, face(s)) for s in range(seed * 1000, seed * 1000 + cfg["self_recon.faces"])]
        images = [face_photo(f, cam, s) for s, f in faces]
        rec = _reconstructor(args.recon, cfg)
        if isinstance(rec, OracleReconstructor):
            for im, (_, f) in zip(images, faces):
                rec.register(im, f)
    report: NmeReport = self_reconstruction_experiment(rec, images, cfg.schedule_spec(), cam, threads=args.threads)
    out = Path(args.output)
    report.write_all(out, "self_recon")
    _finish_dir(out, "self-recon", cfg, cfg["run.seed"], t0)
    print(f"{report.n_valid}/{len(report.rows)} views, mean NME {100 * report.mean:.3f}%")


def cmd_synth_faces(args) -> None:
    from .experiment import write_face_dataset

    cfg = _config(args)
    t0 = time.perf_counter()
    seed = cfg["run.seed"]
    out = Path(args.output)
    yaws = _floats(args.yaws) if args.yaws else (0.0,)
    write_face_dataset(out, range(seed * 1000, seed * 1000 + args.count), cfg.camera(), yaws,
                       cfg["grid.oracle_dims"], cfg["grid.half_extent"], {"config_hash": cfg.hash, "seed": seed})
    _finish_dir(out, "synth-faces", cfg, seed, t0)
    print(f"{args.count * len(yaws)} photos -> {out}")


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="boot3d", description="Bootstrapped 3D face reconstruction pipeline.")
    p.add_argument("--version", action="version", version=f"boot3d {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, fn, help_, config=True, threads=False):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.set_defaults(func=fn)
        if config:
            sp.add_argument("--config", help="pipeline config file (see init-config)")
            sp.add_argument("--seed", type=int, help="override run.seed")
        if threads:
            sp.add_argument("--threads", type=int, help="worker threads (default: $BOOT3D_THREADS or 1)")
        sp.add_argument("-o", "--output", required=True, help="output path")
        sp.add_argument("-v", "--verbose", action="store_true")
        return sp

    add("init-config", cmd_init_config, "write the default config with comments", config=False)
    sp = add("extract-mesh", cmd_extract_mesh, "marching cubes on a VXG1 grid -> OBJ")
    sp.add_argument("grid")
    sp.add_argument("--iso", type=float)
    sp = add("estimate-pose", cmd_estimate_pose, "face frame of an OBJ mesh -> CSV")
    sp.add_argument("mesh")
    sp = add("render-sweep", cmd_render_sweep, "render a mesh over the yaw/pitch schedule")
    sp.add_argument("mesh")
    sp.add_argument("image", help="source image for vertex colors and the backplane")
    sp.add_argument("--yaw-set", help="explicit yaws, e.g. '-20 20' (default: full lattice)")
    sp.add_argument("--pitch-limit", type=float)
    sp = add("gen-pairs", cmd_gen_pairs, "generate bootstrap training pairs", threads=True)
    sp.add_argument("--recon", required=True, help="oracle | toy:<model.toy>")
    sp.add_argument("--images", required=True, help="directory of frontal .ppm/.png images")
    add("bootstrap-run", cmd_bootstrap_run, "bias-train, bootstrap, fine-tune and evaluate", threads=True)
    sp = add("evaluate", cmd_evaluate, "NME of predicted vs ground-truth OBJ meshes", threads=True)
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--icp", action="store_true", help="rigidly align predictions first")
    sp = add("self-recon", cmd_self_recon, "self-reconstruction robustness experiment", threads=True)
    sp.add_argument("--recon", required=True, help="oracle | toy:<model.toy>")
    sp.add_argument("--images", help="image directory (default: synthetic faces)")
    sp = add("synth-faces", cmd_synth_faces, "write synthetic face photos, meshes and grids")
    sp.add_argument("--count", type=int, default=3)
    sp.add_argument("--yaws", help="poses to render, e.g. '0 30' (default: 0)")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand (see --help)")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        if hasattr(args, "threads"):
            args.threads = resolve_threads(args.threads)
        args.func(args)
    except Boot3dError as exc:
        print(f"error: {exc.code}: {' '.join(str(exc).split())}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: io: {exc.strerror or exc}: {exc.filename or ''}".rstrip(": "), file=sys.stderr)
        return 2
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
