import numpy as np
import pytest

from witloc import dataset as D
from witloc.config import load_config


@pytest.fixture(scope="module")
def small_cfg():
    return load_config(preset="tiny", overrides=["R=6", "T=3", "S=5", "S_moving=2"])


@pytest.fixture(scope="module")
def raw(small_cfg):
    return D.generate(small_cfg)


@pytest.fixture(scope="module")
def ready(raw):
    return D.normalize(D.split(raw, 0.75, seed=0))


# realify


def test_realify_345():
    out = D.realify(np.array([[3 + 4j]]))
    np.testing.assert_array_equal(out, [[3.0, 4.0, 5.0]])


def test_realify_real_channel():
    H = np.random.default_rng(0).normal(size=(4, 3)).astype(complex)
    out = D.realify(H)
    np.testing.assert_array_equal(out[:, 4:8], 0.0)
    np.testing.assert_array_equal(out[:, 8:], np.abs(H.real.T))


def test_realify_layout_and_abs_oracle():
    rng = np.random.default_rng(1)
    H = rng.normal(size=(5, 7)) + 1j * rng.normal(size=(5, 7))
    out = D.realify(H)
    assert out.shape == (7, 15)
    re, im, ab = out[:, :5], out[:, 5:10], out[:, 10:]
    np.testing.assert_array_equal(re + 1j * im, H.T)  # exact reconstruction
    np.testing.assert_allclose(ab, np.sqrt(re**2 + im**2), atol=1e-12)


# generation


def test_generate_counts_without_threshold(small_cfg):
    cfg = small_cfg.with_overrides(R=2, T=3, power_threshold_dbm=float("-inf"))
    ds = D.generate(cfg)
    assert len(ds) == 6
    assert ds.n_discarded == 0
    assert ds.features.shape == (6, 16, 24)


def test_active_subcarriers_s_preset():
    cfg = load_config(preset="s-dynamic")
    assert cfg.n_active == 32
    np.testing.assert_array_equal(cfg.physics().active_subcarriers, np.arange(0, 512, 16))


def test_generate_deterministic(small_cfg):
    a, b = D.generate(small_cfg), D.generate(small_cfg)
    assert a.equals(b)


def test_generate_independent_of_worker_count(small_cfg):
    assert D.generate(small_cfg, workers=1).equals(D.generate(small_cfg, workers=3))


def test_discard_rule_monotone(small_cfg, raw):
    cuts = np.quantile(raw.power_dbm, [0.2, 0.5, 0.8])
    counts = [len(D.generate(small_cfg.with_overrides(power_threshold_dbm=float(c)))) for c in cuts]
    assert len(raw) >= counts[0] >= counts[1] >= counts[2]
    assert counts[-1] < len(raw)


def test_s_like_discard_reduces_count():
    # S-preset geometry at reduced R/T; weak cells created by a low transmit power
    cfg = load_config(preset="s-dynamic", overrides=["R=6", "T=2", "Mx=2", "Mz=2", "tx_power_dbm=0"])
    gains = D.generate(cfg.with_overrides(power_threshold_dbm=float("-inf"))).power_dbm
    cfg = cfg.with_overrides(tx_power_dbm=-130.0 - float(np.median(gains)))
    kept = D.generate(cfg)
    assert len(kept) < cfg.R * cfg.T
    assert kept.n_discarded == cfg.R * cfg.T - len(kept)
    assert np.all(kept.power_dbm >= -130.0)


def test_everything_discarded_is_an_error(small_cfg):
    with pytest.raises(D.GenerationError):
        D.generate(small_cfg.with_overrides(power_threshold_dbm=float("inf")))


def test_labels_are_scaled_nominal_positions(small_cfg, raw):
    scene = D.build_scene(small_cfg)
    np.testing.assert_array_equal(raw.labels, D.scale_labels(scene.transmitters[raw.r], raw.bounds))
    assert np.all((raw.labels >= 0) & (raw.labels <= 1))


def test_grid_layout(small_cfg):
    cfg = small_cfg.with_overrides(tx_layout="grid", grid_spacing=10.0, R=12)
    sc = D.build_scene(cfg)
    np.testing.assert_array_equal(sc.transmitters[:3, :2], [[5, 5], [15, 5], [25, 5]])
    with pytest.raises(D.GenerationError):
        D.build_scene(cfg.with_overrides(R=101))


# normalization


def test_normalize_unit_max_per_part(ready):
    for k in range(3):
        assert np.max(np.abs(ready.part(k))) == 1.0
    assert np.all(np.abs(ready.features) <= 1.0)


def test_normalize_constants_match_full_scan(raw):
    ds = D.normalize(raw)
    n = raw.n_antennas
    for k in range(3):
        brute = max(abs(float(v)) for v in raw.features[:, :, k * n : (k + 1) * n].ravel())
        assert ds.scale[k] == brute


def test_normalize_idempotent(ready):
    twice = D.normalize(ready)
    np.testing.assert_array_equal(twice.features, ready.features)
    np.testing.assert_array_equal(twice.scale, ready.scale)


def test_normalize_preserves_argmax(raw):
    ds = D.normalize(raw)
    for k in range(3):
        assert np.argmax(np.abs(raw.part(k))) == np.argmax(np.abs(ds.part(k)))


def test_normalize_train_only(raw):
    ds = D.split(raw, 0.75, seed=1)
    tr = D.normalize(ds, train_only=True)
    n = raw.n_antennas
    assert tr.norm_train_only
    assert tr.scale[0] == np.max(np.abs(raw.features[ds.train_idx, :, :n]))


def test_normalize_all_zero_part_fails(raw):
    zeroed = D.Dataset(**{**raw.__dict__, "features": raw.features * np.r_[np.ones(8), np.zeros(8), np.ones(8)]})
    with pytest.raises(D.NormalizationError):
        D.normalize(zeroed)


# labels


def test_scale_labels_examples():
    b = [[0, 100], [0, 100]]
    np.testing.assert_array_equal(D.scale_labels([50, 25], b), [0.5, 0.25])
    np.testing.assert_array_equal(D.scale_labels([0, 0, 1.5], b), [0, 0])


def test_scale_round_trip():
    rng = np.random.default_rng(3)
    b = np.array([[-20.0, 180.0], [5.0, 95.0]])
    u = rng.uniform(b[:, 0], b[:, 1], size=(10_000, 2))
    back = D.unscale_labels(D.scale_labels(u, b), b)
    assert np.max(np.abs(back - u)) < 1e-12


def test_out_of_bounds_label_clamped(caplog):
    out = D.scale_labels([120.0, -5.0], [[0, 100], [0, 100]])
    np.testing.assert_array_equal(out, [1.0, 0.0])
    assert "clamped" in caplog.text


def test_bad_bounds():
    with pytest.raises(ValueError):
        D.scale_labels([1, 1], [[5, 5], [0, 1]])


# split


def test_split_ratio_and_partition(raw):
    ds = D.Dataset(**{**raw.__dict__, "features": np.zeros((100, 1, 3)), "labels": np.zeros((100, 2))})
    s = D.split(ds, 0.75, seed=4)
    assert len(s.train_idx) == 75 and len(s.test_idx) == 25
    assert set(s.train_idx) | set(s.test_idx) == set(range(100))
    assert not set(s.train_idx) & set(s.test_idx)
    again = D.split(ds, 0.75, seed=4)
    np.testing.assert_array_equal(s.train_idx, again.train_idx)
    np.testing.assert_array_equal(s.test_idx, again.test_idx)
    assert len(s.val_idx) + len(s.holdout_test_idx) == 25
    assert not set(s.val_idx) & set(s.holdout_test_idx)


def test_split_needs_four_samples(raw):
    tiny = D.Dataset(**{**raw.__dict__, "features": raw.features[:3]})
    with pytest.raises(ValueError):
        D.split(tiny)


# file format


def test_save_load_round_trip(ready, tmp_path):
    path = tmp_path / "ds.bin"
    D.save(ready, path)
    back = D.load(path)
    assert back.equals(ready)
    assert back.features.dtype == np.float32


def test_file_size_arithmetic(ready, tmp_path):
    path = tmp_path / "ds.bin"
    D.save(ready, path)
    n, nc, nr = len(ready), ready.n_active, ready.n_antennas
    header = 6 + 2 + 8 * 8 + 7 * 8
    per_sample = nc * 3 * nr * 4 + 2 * 8 + (8 + 8 + 8)
    assert path.stat().st_size == header + n * per_sample + n * 8


def test_bad_magic(ready, tmp_path):
    path = tmp_path / "ds.bin"
    D.save(ready, path)
    raw = bytearray(path.read_bytes())
    raw[:6] = b"NOTDS!"
    path.write_bytes(bytes(raw))
    with pytest.raises(D.DatasetFormatError):
        D.load(path)


def test_bad_version(ready, tmp_path):
    path = tmp_path / "ds.bin"
    D.save(ready, path)
    raw = bytearray(path.read_bytes())
    raw[6] = 9
    path.write_bytes(bytes(raw))
    with pytest.raises(D.DatasetFormatError):
        D.load(path)


def test_truncated_file(ready, tmp_path):
    path = tmp_path / "ds.bin"
    D.save(ready, path)
    path.write_bytes(path.read_bytes()[:-10])
    with pytest.raises(D.DatasetIOError):
        D.load(path)
    path.write_bytes(path.read_bytes()[:20])
    with pytest.raises(D.DatasetIOError):
        D.load(path)
