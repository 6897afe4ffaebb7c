"""Location-tagged CSI datasets: generation, realification, scaling, splits, file I/O."""

from __future__ import annotations

import logging
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .channel import ArrayGeometry, Scene, channel_matrix, derive_paths, perturb_scene, received_power_dbm
from .config import Config

logger = logging.getLogger(__name__)

MAGIC = b"WITDS1"
VERSION = 1
_HEADER = struct.Struct("<6sH8q7d")  # magic, version, 8 int64 fields, 3 norm constants + 4 bounds
HEADER_SIZE = _HEADER.size

# RNG stream tags: generator streams are keyed (seed, tag, ...)
_SCENE, _SNAPSHOT, _SAMPLE, _SPLIT = 0, 1, 2, 3


class GenerationError(RuntimeError):
    pass


class NormalizationError(ValueError):
    pass


class DatasetFormatError(ValueError):
    pass


class DatasetIOError(OSError):
    pass


@dataclass
class Dataset:
    """Realified CSI samples with scaled labels.

    ``features`` has shape ``(n, N_c', 3 N_r)``: per subcarrier the real,
    imaginary and magnitude parts of the channel across antennas.
    ``scale`` holds the divisors applied to those three parts (ones when
    not normalized). ``train_idx`` / ``test_idx`` index the samples; the
    holdout ``test_idx`` is further halved into validation and test.
    """

    features: np.ndarray
    labels: np.ndarray
    r: np.ndarray
    t: np.ndarray
    power_dbm: np.ndarray
    bounds: np.ndarray
    R: int
    T: int
    n_antennas: int
    scale: np.ndarray = field(default_factory=lambda: np.ones(3))
    normalized: bool = False
    norm_train_only: bool = False
    train_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    test_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    n_discarded: int = 0

    def __len__(self) -> int:
        return len(self.features)

    @property
    def n_active(self) -> int:
        return self.features.shape[1]

    @property
    def val_idx(self) -> np.ndarray:
        return self.test_idx[: len(self.test_idx) // 2]

    @property
    def holdout_test_idx(self) -> np.ndarray:
        return self.test_idx[len(self.test_idx) // 2 :]

    def part(self, k: int) -> np.ndarray:
        """View of one feature part (0 real, 1 imaginary, 2 magnitude)."""
        n = self.n_antennas
        return self.features[..., k * n : (k + 1) * n]

    def equals(self, other: "Dataset") -> bool:
        arrays = ("features", "labels", "r", "t", "power_dbm", "bounds", "scale", "train_idx", "test_idx")
        scalars = ("R", "T", "n_antennas", "normalized", "norm_train_only")
        return all(
            getattr(self, a).dtype == getattr(other, a).dtype and np.array_equal(getattr(self, a), getattr(other, a))
            for a in arrays
        ) and all(getattr(self, s) == getattr(other, s) for s in scalars)


# ---------------------------------------------------------------------------
# transforms


def realify(H) -> np.ndarray:
    """``(N_r, N_c')`` complex -> ``(N_c', 3 N_r)`` real rows ``[Re | Im | Abs]``."""
    H = np.asarray(getattr(H, "entries", H))
    Ht = H.T
    return np.concatenate([Ht.real, Ht.imag, np.abs(Ht)], axis=-1)


def scale_labels(u, bounds) -> np.ndarray:
    """Min-max map of the first two coordinates into ``[0, 1]``; out-of-range values are clamped."""
    u = np.asarray(u, dtype=float)[..., :2]
    b = np.asarray(bounds, dtype=float).reshape(2, 2)
    lo, hi = b[:, 0], b[:, 1]
    if np.any(lo >= hi):
        raise ValueError("bounds need min < max per coordinate")
    s = (u - lo) / (hi - lo)
    if np.any((s < 0) | (s > 1)):
        logger.warning("label outside region of interest; clamped")
        s = np.clip(s, 0.0, 1.0)
    return s


def unscale_labels(s, bounds) -> np.ndarray:
    b = np.asarray(bounds, dtype=float).reshape(2, 2)
    return np.asarray(s, dtype=float) * (b[:, 1] - b[:, 0]) + b[:, 0]


def normalize(ds: Dataset, train_only: bool = False) -> Dataset:
    """Divide each feature part by its max magnitude.

    By default the max is taken over every sample (train and test alike);
    ``train_only`` restricts it to ``train_idx``. Features come back as float32.
    """
    idx = ds.train_idx if train_only else slice(None)
    if train_only and len(ds.train_idx) == 0:
        raise NormalizationError("train-only normalization needs a split")
    n = ds.n_antennas
    src = ds.features.astype(np.float64)
    deltas = np.empty(3)
    for k in range(3):
        deltas[k] = np.max(np.abs(src[idx, :, k * n : (k + 1) * n]))
        if not deltas[k] > 0:
            raise NormalizationError(f"feature part {k} is all zero")
    div = np.repeat(deltas, n)
    return replace(
        ds,
        features=(src / div).astype(np.float32),
        scale=ds.scale * deltas,
        normalized=True,
        norm_train_only=train_only,
    )


def split(ds: Dataset, ratio: float = 0.75, seed: int = 0) -> Dataset:
    """Seeded random permutation; the first ``round(ratio * n)`` samples train."""
    n = len(ds)
    if n < 4:
        raise ValueError("need at least 4 samples to split")
    perm = np.random.default_rng([seed, _SPLIT]).permutation(n)
    k = int(round(ratio * n))
    return replace(ds, train_idx=np.sort(perm[:k]), test_idx=perm[k:])


# ---------------------------------------------------------------------------
# generation


def build_scene(cfg: Config) -> Scene:
    """Initial geometry: transmitters, RRHs along the south edge, scatterers in the ROI."""
    rng = np.random.default_rng([cfg.seed, _SCENE])
    (x0, x1), (y0, y1) = cfg.bounds
    if cfg.tx_layout == "grid":
        xs = np.arange(x0 + cfg.grid_spacing / 2, x1, cfg.grid_spacing)
        ys = np.arange(y0 + cfg.grid_spacing / 2, y1, cfg.grid_spacing)
        if len(xs) * len(ys) < cfg.R:
            raise GenerationError(f"grid holds {len(xs) * len(ys)} points, R = {cfg.R}")
        gx, gy = np.meshgrid(xs, ys)
        xy = np.stack([gx.ravel(), gy.ravel()], axis=1)[: cfg.R]
    else:
        xy = rng.uniform([x0, y0], [x1, y1], size=(cfg.R, 2))
    tx = np.column_stack([xy, np.full(cfg.R, cfg.tx_height)])

    rrh_x = x0 + (np.arange(cfg.M) + 0.5) * (x1 - x0) / cfg.M
    rrhs = np.column_stack([rrh_x, np.full(cfg.M, y0 - cfg.rrh_offset), np.full(cfg.M, cfg.rrh_height)])

    sxy = rng.uniform([x0, y0], [x1, y1], size=(cfg.S, 2))
    sz = rng.uniform(0.0, cfg.scatterer_max_height, size=cfg.S)
    mats = rng.integers(0, len(cfg.material_names), size=cfg.S)
    movable = rng.permutation(cfg.S)[: cfg.S_moving]
    return Scene(tx, rrhs, np.column_stack([sxy, sz]), mats, np.sort(movable))


def snapshot(cfg: Config, scene: Scene, t: int):
    """Perturbed scene and rain flag for snapshot ``t`` (a pure function of seed and t)."""
    env = np.random.default_rng([cfg.seed, _SNAPSHOT, t])
    return perturb_scene(scene, cfg.sigma_z, cfg.sigma_n, env, len(cfg.material_names), cfg.p_rain)


def sample_paths(cfg: Config, snap: Scene, rain: bool, r: int, t: int, phys=None):
    """Propagation paths of transmitter ``r`` in snapshot ``t``."""
    rng = np.random.default_rng([cfg.seed, _SAMPLE, r, t])
    return derive_paths(snap.transmitters[r], snap, rain, phys or cfg.physics(), rng)


def _snapshot(t: int, cfg: Config, scene: Scene, geom: ArrayGeometry, phys):
    snap, rain = snapshot(cfg, scene, t)
    feats, rows, powers = [], [], []
    for r in range(cfg.R):
        paths = sample_paths(cfg, snap, rain, r, t, phys)
        p = received_power_dbm(paths, cfg.tx_power_dbm) if len(paths) else float("-inf")
        if not p >= cfg.power_threshold_dbm:
            continue
        H = channel_matrix(paths, geom, phys, n_rrh=cfg.M)
        feats.append(realify(H))
        rows.append(r)
        powers.append(p)
    return feats, rows, powers


def generate(cfg: Config, seed: int | None = None, workers: int | None = None) -> Dataset:
    """Simulate every (location, snapshot) pair and keep those above the power threshold.

    Returns an unnormalized, unsplit dataset with float64 features. Snapshots
    are independent and may run on ``workers`` threads (default ``WIT_THREADS``
    or 1); results do not depend on the worker count.
    """
    if seed is not None:
        cfg = cfg.with_overrides(seed=seed)
    cfg.validate()
    phys = cfg.physics()
    geom = ArrayGeometry(cfg.Mx, cfg.Mz, phys.wavelength)
    scene = build_scene(cfg)
    bounds = np.array(cfg.bounds, dtype=float)
    labels_all = scale_labels(scene.transmitters, bounds)

    if workers is None:
        workers = int(os.environ.get("WIT_THREADS", "1") or 1)
    job = lambda t: _snapshot(t, cfg, scene, geom, phys)  # noqa: E731
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(job, range(cfg.T)))
    else:
        results = [job(t) for t in range(cfg.T)]

    feats, rs, ts, ps = [], [], [], []
    for t, (f, rows, powers) in enumerate(results):
        feats.extend(f)
        rs.extend(rows)
        ts.extend([t] * len(rows))
        ps.extend(powers)
    total = cfg.R * cfg.T
    if not feats:
        raise GenerationError(f"all {total} samples fell below {cfg.power_threshold_dbm} dBm")
    r = np.asarray(rs, dtype=np.int64)
    return Dataset(
        features=np.stack(feats),
        labels=labels_all[r],
        r=r,
        t=np.asarray(ts, dtype=np.int64),
        power_dbm=np.asarray(ps, dtype=np.float64),
        bounds=bounds,
        R=cfg.R,
        T=cfg.T,
        n_antennas=cfg.n_antennas,
        n_discarded=total - len(feats),
    )


def prepare(cfg: Config, seed: int | None = None, workers: int | None = None) -> Dataset:
    """generate -> split -> normalize, the pipeline used by the command line."""
    ds = generate(cfg, seed=seed, workers=workers)
    ds = split(ds, cfg.split_ratio, cfg.seed if seed is None else seed)
    return normalize(ds, train_only=cfg.norm_mode == "train")


# ---------------------------------------------------------------------------
# file format


def file_size(n: int, n_active: int, n_antennas: int, n_split: int) -> int:
    per_sample = n_active * 3 * n_antennas * 4 + 2 * 8 + 3 * 8
    return HEADER_SIZE + n * per_sample + n_split * 8


def save(ds: Dataset, path: str | Path) -> None:
    """Write ``ds`` little-endian: header, float32 features, float64 labels, meta, split."""
    n = len(ds)
    flags = int(ds.normalized) | (int(ds.norm_train_only) << 1)
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        ds.R,
        ds.T,
        ds.n_antennas,
        ds.n_active,
        n,
        len(ds.train_idx),
        len(ds.test_idx),
        flags,
        *np.asarray(ds.scale, dtype=float),
        *np.asarray(ds.bounds, dtype=float).reshape(4),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(ds.features, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(ds.labels, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ds.r, dtype="<i8").tobytes())
        fh.write(np.ascontiguousarray(ds.t, dtype="<i8").tobytes())
        fh.write(np.ascontiguousarray(ds.power_dbm, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ds.train_idx, dtype="<i8").tobytes())
        fh.write(np.ascontiguousarray(ds.test_idx, dtype="<i8").tobytes())


def load(path: str | Path) -> Dataset:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        if raw[:6] != MAGIC[: len(raw[:6])]:
            raise DatasetFormatError(f"{path}: not a dataset file")
        raise DatasetIOError(f"{path}: truncated header")
    magic, version, R, T, n_ant, n_act, n, n_tr, n_te, flags, *rest = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    expected = file_size(n, n_act, n_ant, n_tr + n_te)
    if len(raw) != expected:
        raise DatasetIOError(f"{path}: expected {expected} bytes, found {len(raw)}")

    off = HEADER_SIZE

    def take(dtype, count, shape):
        nonlocal off
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=off)
        off += arr.nbytes
        return arr.reshape(shape).astype(np.dtype(dtype).newbyteorder("="))

    feats = take("<f4", n * n_act * 3 * n_ant, (n, n_act, 3 * n_ant))
    labels = take("<f8", n * 2, (n, 2))
    r = take("<i8", n, (n,))
    t = take("<i8", n, (n,))
    power = take("<f8", n, (n,))
    tr = take("<i8", n_tr, (n_tr,))
    te = take("<i8", n_te, (n_te,))
    return Dataset(
        features=feats,
        labels=labels,
        r=r,
        t=t,
        power_dbm=power,
        bounds=np.asarray(rest[3:], dtype=float).reshape(2, 2),
        R=R,
        T=T,
        n_antennas=n_ant,
        scale=np.asarray(rest[:3], dtype=float),
        normalized=bool(flags & 1),
        norm_train_only=bool(flags & 2),
        train_idx=tr,
        test_idx=te,
    )
