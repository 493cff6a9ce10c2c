import pytest

from boot3d.config import KEYS, PipelineConfig, load_config, parse_config
from boot3d.errors import InvalidConfigError


def test_version_only_gives_defaults():
    cfg = parse_config("version = 1\n")
    for k in KEYS:
        assert cfg[k.path] == k.default


def test_missing_or_wrong_version():
    with pytest.raises(InvalidConfigError, match="version"):
        parse_config("[run]\nseed = 3\n")
    with pytest.raises(InvalidConfigError, match="version"):
        parse_config("version = 2\n")


@pytest.mark.parametrize("text", [
    "version = 1\n[run]\nsede = 3\n",
    "version = 1\n[nope]\nseed = 3\n",
    "version = 1\nextra = 4\n",
    "version = 1\n[run]\nseed = three\n",
    "version = 1\n[bootstrap]\ninclude_frontal = maybe\n",
])
def test_bad_configs_rejected(text):
    with pytest.raises(InvalidConfigError):
        parse_config(text)


def test_values_parse():
    cfg = parse_config("version = 1\n[bootstrap]\nyaw_set = -20 20\ninclude_frontal = yes\n[grid]\ndims = 8 9 10\n")
    assert cfg["bootstrap.yaw_set"] == (-20.0, 20.0)
    assert cfg["bootstrap.include_frontal"] is True
    assert cfg["grid.dims"] == (8, 9, 10)
    b = cfg.bootstrap_config(seed=5)
    assert b.yaw_set == (-20.0, 20.0) and b.seed == 5 and b.grid_dims == (8, 9, 10)


def test_text_roundtrip_and_hash():
    cfg = PipelineConfig({"run.seed": 7, "experiment.seeds": "0 1 2"})
    back = parse_config(cfg.to_text(with_docs=True))
    assert back.items() == cfg.items()
    assert back.hash == cfg.hash == PipelineConfig({"run.seed": "7", "experiment.seeds": (0, 1, 2)}).hash
    assert len(cfg.hash) == 16
    assert PipelineConfig().hash != cfg.hash


def test_override_after_load(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("version = 1\n[run]\nseed = 3\n")
    cfg = load_config(p)
    h = cfg.hash
    cfg.set("run.seed", 4)
    assert cfg["run.seed"] == 4 and cfg.hash != h
    with pytest.raises(InvalidConfigError):
        cfg.set("run.nope", 1)
    with pytest.raises(InvalidConfigError):
        load_config(tmp_path / "missing.cfg")


def test_derived_objects():
    cfg = PipelineConfig()
    assert cfg.camera().image_size == (128, 128)
    assert cfg.experiment_config().input_size == 16
    assert cfg.schedule_spec().pitch_limit_deg == 20.0
    cfg.set("camera.width", 64)
    with pytest.raises(InvalidConfigError):
        cfg.experiment_config()
