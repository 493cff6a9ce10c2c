"""Pipeline configuration: one versioned INI-style key-value file.

Every key has a documented default, so an empty file (apart from the
version line) is a complete config. Unknown sections or keys are errors.
List values are whitespace separated.
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass
from pathlib import Path

from .errors import InvalidConfigError

CONFIG_VERSION = 1


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.split())


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.split())


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


_PARSERS = {"int": int, "float": float, "bool": _bool, "str": str, "ints": _ints, "floats": _floats}


@dataclass(frozen=True)
class Key:
    section: str
    name: str
    kind: str
    default: object
    doc: str

    @property
    def path(self) -> str:
        return f"{self.section}.{self.name}"


_Y60 = (-60.0, -40.0, -20.0, 20.0, 40.0, 60.0)

KEYS: tuple[Key, ...] = (
    Key("run", "seed", "int", 0, "seed for training faces, shuffles and splits"),
    Key("grid", "dims", "ints", (24, 24, 24), "toy model output grid and bootstrap target grid"),
    Key("grid", "half_extent", "float", 0.85, "grids cover the cube [-h, h]^3"),
    Key("grid", "iso", "float", 0.5, "marching cubes iso level"),
    Key("grid", "oracle_dims", "ints", (64, 64, 64), "oracle reconstructor grid"),
    Key("camera", "width", "int", 128, "render width in pixels"),
    Key("camera", "height", "int", 128, "render height in pixels"),
    Key("camera", "view_rect", "floats", (0.0, 0.0, 1.0, 1.0), "cx cy half_width half_height"),
    Key("schedule", "increment", "float", 10.0, "yaw and pitch lattice step (deg)"),
    Key("schedule", "pitch_limit", "float", 20.0, "max |pitch| for self-reconstruction views (deg)"),
    Key("schedule", "gaze_limit", "float", 90.0, "max angle between gaze and camera direction (deg)"),
    Key("bootstrap", "yaw_set", "floats", _Y60, "yaws of bootstrap pairs (deg)"),
    Key("bootstrap", "pitch_limit", "float", 0.0, "max |pitch| of bootstrap pairs (deg)"),
    Key("bootstrap", "split", "float", 0.9, "train fraction of source images"),
    Key("bootstrap", "epochs", "int", 10, "fine-tuning epochs"),
    Key("bootstrap", "batch", "int", 32, "fine-tuning batch size"),
    Key("bootstrap", "lr", "float", 0.01, "fine-tuning initial learning rate"),
    Key("bootstrap", "lr_factor", "float", 0.5, "learning-rate decay factor"),
    Key("bootstrap", "lr_period", "int", 5, "epochs between decays"),
    Key("bootstrap", "include_frontal", "bool", False, "also train on the untransformed source pair"),
    Key("experiment", "seeds", "ints", (0,), "seeds averaged by bootstrap-run"),
    Key("experiment", "train_faces", "int", 60, "synthetic training faces per seed"),
    Key("experiment", "train_yaws", "floats", (-10.0, 0.0, 10.0), "poses of the frontal training photos"),
    Key("experiment", "heldout_faces", "int", 20, "fixed held-out benchmark faces"),
    Key("experiment", "test_yaws", "floats", tuple(float(y) for y in range(-60, 61, 10)),
        "poses of held-out photos"),
    Key("experiment", "input_size", "int", 16, "toy model input resolution"),
    Key("experiment", "bias_epochs", "int", 30, "frontal-only training epochs"),
    Key("experiment", "bias_lr", "float", 0.01, "frontal-only initial learning rate"),
    Key("experiment", "align", "bool", False, "ICP-align predictions before held-out NME"),
    Key("self_recon", "faces", "int", 10, "synthetic faces for the self-reconstruction test"),
)

_BY_PATH = {k.path: k for k in KEYS}


def _format(kind: str, value) -> str:
    if kind in ("ints", "floats"):
        return " ".join(repr(v) for v in value)
    if kind == "bool":
        return "true" if value else "false"
    return repr(value) if kind == "float" else str(value)


class PipelineConfig:
    """Resolved config values, addressed as ``cfg["section.key"]``."""

    def __init__(self, values: dict | None = None):
        self._values = {k.path: k.default for k in KEYS}
        for path, v in (values or {}).items():
            self.set(path, v)

    def set(self, path: str, value) -> None:
        key = _BY_PATH.get(path)
        if key is None:
            raise InvalidConfigError(f"unknown config key {path!r}")
        if isinstance(value, str):
            try:
                value = _PARSERS[key.kind](value)
            except ValueError as exc:
                raise InvalidConfigError(f"{path}: {exc}") from None
        self._values[path] = value

    def __getitem__(self, path: str):
        if path not in self._values:
            raise InvalidConfigError(f"unknown config key {path!r}")
        return self._values[path]

    def items(self):
        return [(k.path, self._values[k.path]) for k in KEYS]

    def to_text(self, with_docs: bool = False) -> str:
        lines = [f"version = {CONFIG_VERSION}"]
        section = None
        for k in KEYS:
            if k.section != section:
                section = k.section
                lines += ["", f"[{section}]"]
            if with_docs:
                lines.append(f"# {k.doc}")
            lines.append(f"{k.name} = {_format(k.kind, self._values[k.path])}")
        return "\n".join(lines) + "\n"

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    # --- derived objects ----------------------------------------------------

    def camera(self):
        from .render import Camera
        cam = Camera(tuple(self["camera.view_rect"]), (self["camera.width"], self["camera.height"]))
        cam.validate()
        return cam

    def bootstrap_config(self, seed: int | None = None):
        from .bootstrap import BootstrapConfig
        return BootstrapConfig(yaw_set=self["bootstrap.yaw_set"], pitch_limit_deg=self["bootstrap.pitch_limit"],
                               increment_deg=self["schedule.increment"], gaze_limit_deg=self["schedule.gaze_limit"],
                               split_ratio=self["bootstrap.split"], epochs=self["bootstrap.epochs"],
                               batch_size=self["bootstrap.batch"], lr_initial=self["bootstrap.lr"],
                               lr_factor=self["bootstrap.lr_factor"], lr_period=self["bootstrap.lr_period"],
                               seed=self["run.seed"] if seed is None else seed, grid_dims=self["grid.dims"],
                               grid_half_extent=self["grid.half_extent"],
                               include_frontal=self["bootstrap.include_frontal"])

    def experiment_config(self):
        from .experiment import ExperimentConfig
        if self["camera.width"] != self["camera.height"]:
            raise InvalidConfigError("the experiment needs a square camera")
        return ExperimentConfig(
            n_train_faces=self["experiment.train_faces"], train_yaws=self["experiment.train_yaws"],
            n_heldout_faces=self["experiment.heldout_faces"], test_yaws=self["experiment.test_yaws"],
            image_size=self["camera.width"], input_size=self["experiment.input_size"],
            grid_dims=self["grid.dims"], grid_half_extent=self["grid.half_extent"],
            bias_epochs=self["experiment.bias_epochs"], bias_lr=self["experiment.bias_lr"],
            batch_size=self["bootstrap.batch"], finetune_epochs=self["bootstrap.epochs"],
            finetune_lr=self["bootstrap.lr"], lr_factor=self["bootstrap.lr_factor"],
            lr_period=self["bootstrap.lr_period"], split_ratio=self["bootstrap.split"],
            include_frontal=self["bootstrap.include_frontal"], align=self["experiment.align"])

    def schedule_spec(self):
        from .bootstrap import ScheduleSpec
        return ScheduleSpec(self["schedule.increment"], self["schedule.pitch_limit"], self["schedule.gaze_limit"])


def parse_config(text: str, source: str = "<config>") -> PipelineConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string("[__top__]\n" + text, source=source)
    except configparser.Error as exc:
        raise InvalidConfigError(f"{source}: {exc}".replace("\n", " ")) from None
    top = dict(cp["__top__"])
    version = top.pop("version", None)
    if version is None:
        raise InvalidConfigError(f"{source}: missing 'version' line")
    if version.strip() != str(CONFIG_VERSION):
        raise InvalidConfigError(f"{source}: unsupported config version {version.strip()}")
    if top:
        raise InvalidConfigError(f"{source}: unknown top-level keys {sorted(top)}")
    cfg = PipelineConfig()
    for section in cp.sections():
        if section == "__top__":
            continue
        for name, raw in cp[section].items():
            cfg.set(f"{section}.{name}", raw)
    return cfg


def load_config(path) -> PipelineConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise InvalidConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config(text, str(p))
