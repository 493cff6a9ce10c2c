import numpy as np
import pytest

from boot3d.errors import FormatError, InvalidConfigError, InvalidInputError, UnknownImageError
from boot3d.geometry import marching_cubes, mesh_bounds
from boot3d.geometry.voxelize import voxelize
from boot3d.metrics import interocular_distance, nme
from boot3d.pose import axis_angle_deg, eigen_symmetric3, sample_covariance, symmetry_score
from boot3d.recon import (
    LrSchedule, OracleReconstructor, Reconstructor, SyntheticFaceSpec, ToyRegressor, TrainableReconstructor,
    face_photo, generate_synthetic_face, image_key, load_toy, observe, oracle_reconstruct, save_toy, toy_fit,
    toy_reconstruct,
)
from boot3d.recon.synthetic import PARAM_RANGES
from boot3d.render import Image, read_ppm, write_ppm


@pytest.fixture(scope="module")
def photo_pair(face, camera):
    return face_photo(face, camera, 7), face


@pytest.fixture(scope="module")
def tiny_dataset(camera):
    model = ToyRegressor(8, (8, 8, 8))
    data = []
    for s in range(6):
        f = generate_synthetic_face(SyntheticFaceSpec.random(s, rings=12, segments=40, back_rings=4))
        data.append((face_photo(f, camera, s), voxelize(f, model.dims, model.bounds, smooth=True)))
    return data


# --- synthetic faces ----------------------------------------------------------

@pytest.mark.parametrize("seed", [0, 5, 11])
def test_synthetic_face_symmetric_and_shallow(seed):
    f = generate_synthetic_face(SyntheticFaceSpec.random(seed))
    assert symmetry_score(f, f.vertices.mean(axis=0), [1, 0, 0]) < 1e-9
    _, cov = sample_covariance(f)
    assert axis_angle_deg(np.abs(eigen_symmetric3(cov)[2][1]), [0, 0, 1]) < 2.0
    assert set(f.landmarks) == {"eye_outer_left", "eye_outer_right", "nose_tip"}
    assert interocular_distance(f) > 0


def test_synthetic_face_deterministic():
    a = generate_synthetic_face(SyntheticFaceSpec.random(9))
    b = generate_synthetic_face(SyntheticFaceSpec.random(9))
    assert np.array_equal(a.vertices, b.vertices) and np.array_equal(a.vertex_colors, b.vertex_colors)


def test_synthetic_face_rejects_out_of_range():
    lo, _ = PARAM_RANGES["width"]
    with pytest.raises(InvalidInputError):
        generate_synthetic_face(SyntheticFaceSpec(width=lo / 2))


# --- oracle -----------------------------------------------------------------------

def test_oracle_frontal_roundtrip(photo_pair):
    img, f = photo_pair
    rec = OracleReconstructor()
    rec.register(img, f)
    mesh = marching_cubes(rec.reconstruct(img))
    assert nme(mesh, f, interocular_distance(f)) < 0.005


def test_oracle_unknown_image(photo_pair, camera):
    rec = OracleReconstructor()
    with pytest.raises(UnknownImageError):
        rec.reconstruct(photo_pair[0])
    with pytest.raises(UnknownImageError):
        oracle_reconstruct(photo_pair[0], {})


def test_oracle_distinct_images_distinct_grids(camera):
    rec = OracleReconstructor(dims=(24, 24, 24))
    grids = []
    for s in (1, 2):
        f = generate_synthetic_face(SyntheticFaceSpec.random(s))
        img = face_photo(f, camera, s)
        rec.register(img, f)
        grids.append(rec.reconstruct(img))
    assert not np.array_equal(grids[0].values, grids[1].values)


def test_image_key_survives_ppm(tmp_path, photo_pair):
    img = photo_pair[0]
    p = tmp_path / "x.ppm"
    write_ppm(p, img)
    assert image_key(read_ppm(p)) == image_key(img)
    reg = {image_key(img): photo_pair[1]}
    g = oracle_reconstruct(read_ppm(p), reg, dims=(16, 16, 16))
    assert g.dims == (16, 16, 16)


def test_observe_registers_only_with_oracle(photo_pair):
    img, f = photo_pair
    rec = OracleReconstructor(dims=(16, 16, 16))
    observe(rec, img, f)
    assert rec.mesh_for(img) is f
    observe(ToyRegressor(), img, f)


def test_protocols():
    assert isinstance(OracleReconstructor(), Reconstructor)
    assert not isinstance(OracleReconstructor(), TrainableReconstructor)
    assert isinstance(ToyRegressor(), TrainableReconstructor)


# --- toy regressor --------------------------------------------------------------------

def test_untrained_model_is_uniform_half(photo_pair):
    g = toy_reconstruct(ToyRegressor(), photo_pair[0])
    assert g.dims == (24, 24, 24)
    assert np.all(g.values == 0.5)


def test_reconstruct_deterministic(tiny_dataset):
    m = ToyRegressor(8, (8, 8, 8))
    m.weights = np.random.default_rng(0).normal(size=m.weights.shape)
    img = tiny_dataset[0][0]
    assert np.array_equal(m.reconstruct(img).values, m.reconstruct(img).values)


def test_zero_learning_rate_changes_nothing(tiny_dataset):
    m = ToyRegressor(8, (8, 8, 8))
    before = m.snapshot()
    log = toy_fit(m, tiny_dataset, epochs=3, batch_size=2, lr_schedule=LrSchedule(0.0))
    assert np.array_equal(m.weights, before)
    assert len({e.train_loss for e in log}) == 1


def test_fit_same_seed_same_log(tiny_dataset):
    logs = []
    for _ in range(2):
        m = ToyRegressor(8, (8, 8, 8))
        logs.append([(e.lr, e.train_loss) for e in toy_fit(m, tiny_dataset, 4, 2, LrSchedule(0.5), seed=3)])
    assert logs[0] == logs[1]


def test_fit_loss_non_increasing(tiny_dataset):
    m = ToyRegressor(8, (8, 8, 8))
    log = toy_fit(m, tiny_dataset, 12, 2, LrSchedule(0.3), seed=1)
    for a, b in zip(log, log[1:]):
        assert b.train_loss <= a.train_loss * 1.05


def test_fit_schedule_rates(tiny_dataset):
    log = toy_fit(ToyRegressor(8, (8, 8, 8)), tiny_dataset, 11, 4, LrSchedule(0.2, 0.5, 5))
    assert [e.lr for e in log] == [0.2] * 5 + [0.1] * 5 + [0.05]


def test_overfit_single_sample(photo_pair):
    img, f = photo_pair
    m = ToyRegressor()
    g = voxelize(f, m.dims, m.bounds, smooth=True)
    first = m.fit_step([(img, g)], 0.5)
    for _ in range(199):
        last = m.fit_step([(img, g)], 0.5)
    assert last < 0.1 * first
    mesh = marching_cubes(m.reconstruct(img))
    assert nme(mesh, f, mesh_bounds(f).diagonal) < 0.03


def test_fit_dim_mismatch(tiny_dataset):
    m = ToyRegressor(8, (9, 8, 8))
    with pytest.raises(InvalidInputError):
        toy_fit(m, tiny_dataset, 1)
    with pytest.raises(InvalidInputError):
        m.fit_step([], 0.1)


def test_lr_schedule_validation():
    assert LrSchedule().rate(0) == 1e-2 and LrSchedule().rate(5) == 5e-3
    with pytest.raises(InvalidConfigError):
        LrSchedule(0.1, 0.0)
    with pytest.raises(InvalidConfigError):
        LrSchedule(0.1, 0.5, 0)


def test_toy_file_roundtrip(tmp_path):
    m = ToyRegressor(4, (3, 4, 5))
    m.weights = np.random.default_rng(0).normal(size=m.weights.shape)
    p = tmp_path / "m.toy"
    save_toy(p, m)
    data = p.read_bytes()
    assert data[:4] == b"TOY1"
    back = load_toy(p)
    assert back.dims == (3, 4, 5) and back.input_size == 4
    assert np.array_equal(back.weights, m.weights)
    assert np.array_equal(back.bounds.min, m.bounds.min)
    p.write_bytes(data[:-8])
    with pytest.raises(FormatError):
        load_toy(p)
    p.write_bytes(b"TOY2" + data[4:])
    with pytest.raises(FormatError):
        load_toy(p)


def test_snapshot_restore_copy():
    m = ToyRegressor(4, (2, 2, 2))
    snap = m.snapshot()
    m.weights += 1
    c = m.copy()
    m.restore(snap)
    assert np.all(m.weights == 0) and np.all(c.weights == 1)
    with pytest.raises(InvalidInputError):
        m.restore(np.zeros(3))


def test_features_accept_any_image_size():
    m = ToyRegressor(8, (2, 2, 2))
    for w, h in ((8, 8), (50, 30), (3, 3)):
        assert m.features(Image.filled(w, h, (0.2, 0.4, 0.6))).shape == (65,)
