"""Geometric single-bounce multipath channel for a (distributed) massive-MIMO receiver.

Coordinate conventions
----------------------
Every RRH carries a uniform planar array in its local x-z plane with
broadside towards +y. Arrival directions are expressed as

* elevation ``phi_el``: angle from the +z axis, ``cos(phi_el) = v_z / |v|``
* azimuth ``phi_az``: angle from +y towards +x, so the x direction cosine
  equals ``sin(phi_el) * sin(phi_az)``

where ``v`` points from the array towards the last interaction point
(transmitter for LOS, scatterer for NLOS).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0

MATERIALS = ("concrete", "brick", "metal", "wood")
DEFAULT_MATERIAL_AMPLITUDE = {"concrete": 0.5, "brick": 0.45, "metal": 0.9, "wood": 0.35}


@dataclass(frozen=True)
class ArrayGeometry:
    """Per-RRH planar array: ``mx`` columns along x, ``mz`` rows along z."""

    mx: int
    mz: int
    wavelength: float
    spacing: float | None = None

    def __post_init__(self):
        if self.mx < 1 or self.mz < 1:
            raise ValueError("array needs at least one element per axis")
        if self.spacing is None:
            object.__setattr__(self, "spacing", self.wavelength / 2.0)

    @property
    def n_elements(self) -> int:
        return self.mx * self.mz


@dataclass
class Scene:
    """Static geometry of the region of interest.

    Attributes
    ----------
    transmitters : ndarray, shape (R, 3)
    rrhs : ndarray, shape (M, 3)
    scatterers : ndarray, shape (S, 3)
    materials : ndarray of int, shape (S,)
        Index into ``MATERIALS``.
    movable : ndarray of int
        Indices of scatterers that move between snapshots.
    """

    transmitters: np.ndarray
    rrhs: np.ndarray
    scatterers: np.ndarray
    materials: np.ndarray
    movable: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.transmitters = np.asarray(self.transmitters, dtype=float).reshape(-1, 3)
        self.rrhs = np.asarray(self.rrhs, dtype=float).reshape(-1, 3)
        self.scatterers = np.asarray(self.scatterers, dtype=float).reshape(-1, 3)
        self.materials = np.asarray(self.materials, dtype=np.int64).reshape(-1)
        self.movable = np.asarray(self.movable, dtype=np.int64).reshape(-1)
        if len(self.rrhs) < 1:
            raise ValueError("scene needs at least one RRH")
        if len(self.materials) != len(self.scatterers):
            raise ValueError("one material tag per scatterer")
        if len(self.movable) and (self.movable.min() < 0 or self.movable.max() >= len(self.scatterers)):
            raise ValueError("movable indices must refer to scatterers")


@dataclass
class PathSet:
    """Flat list of propagation paths; ``rrh[i]`` tells which RRH path ``i`` reaches."""

    gain: np.ndarray
    delay: np.ndarray
    az: np.ndarray
    el: np.ndarray
    rrh: np.ndarray
    is_los: np.ndarray

    def __len__(self) -> int:
        return len(self.gain)

    def subset(self, mask) -> "PathSet":
        return PathSet(*(getattr(self, f)[mask] for f in ("gain", "delay", "az", "el", "rrh", "is_los")))

    @classmethod
    def concat(cls, *sets: "PathSet") -> "PathSet":
        return cls(
            *(np.concatenate([getattr(s, f) for s in sets]) for f in ("gain", "delay", "az", "el", "rrh", "is_los"))
        )

    @classmethod
    def from_lists(cls, gain, delay, az, el, rrh=None, is_los=None) -> "PathSet":
        gain = np.asarray(gain, dtype=complex).reshape(-1)
        n = len(gain)
        return cls(
            gain,
            np.asarray(delay, dtype=float).reshape(-1),
            np.asarray(az, dtype=float).reshape(-1),
            np.asarray(el, dtype=float).reshape(-1),
            np.zeros(n, dtype=np.int64) if rrh is None else np.asarray(rrh, dtype=np.int64).reshape(-1),
            np.zeros(n, dtype=bool) if is_los is None else np.asarray(is_los, dtype=bool).reshape(-1),
        )


@dataclass(frozen=True)
class PhysicsConfig:
    """Physical constants of one scenario (a view onto the full config)."""

    carrier_hz: float = 3.5e9
    bandwidth_hz: float = 20e6
    n_subcarriers: int = 512
    subcarrier_stride: int = 16
    max_paths: int = 4
    rain_attenuation_db: float = 3.0
    nlos_loss_db: float = 0.0
    material_amplitude: tuple[float, ...] = tuple(DEFAULT_MATERIAL_AMPLITUDE[m] for m in MATERIALS)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def subcarrier_spacing(self) -> float:
        return self.bandwidth_hz / self.n_subcarriers

    @property
    def active_subcarriers(self) -> np.ndarray:
        return np.arange(0, self.n_subcarriers, self.subcarrier_stride)


@dataclass
class ChannelMatrix:
    """Complex ``N_r x N_c'`` frequency response plus its subcarrier grid."""

    entries: np.ndarray
    subcarriers: np.ndarray
    spacing_hz: float


def steering_vector(phi_az, phi_el, geom: ArrayGeometry) -> np.ndarray:
    """Array response ``a_z(el) kron a_x(az, el)``.

    Vectorised over broadcastable angle arrays: the element axis is last.
    """
    phi_az = np.asarray(phi_az, dtype=float)
    phi_el = np.asarray(phi_el, dtype=float)
    kd = 2.0 * np.pi / geom.wavelength * geom.spacing
    ix = np.arange(geom.mx)
    iz = np.arange(geom.mz)
    ax = np.exp(1j * kd * ix * (np.sin(phi_el) * np.sin(phi_az))[..., None])
    az = np.exp(1j * kd * iz * np.cos(phi_el)[..., None])
    # kron(a_z, a_x): z index is the slow one
    return (az[..., :, None] * ax[..., None, :]).reshape(*az.shape[:-1], geom.n_elements)


def arrival_angles(vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(azimuth, elevation) of direction vectors ``vec[..., 3]`` in the array frame."""
    vec = np.asarray(vec, dtype=float)
    r = np.linalg.norm(vec, axis=-1)
    el = np.arccos(np.clip(vec[..., 2] / r, -1.0, 1.0))
    az = np.arctan2(vec[..., 0], vec[..., 1])
    return az, el


def derive_paths(
    u: np.ndarray,
    scene: Scene,
    rain: bool,
    cfg: PhysicsConfig,
    rng: np.random.Generator,
    materials: np.ndarray | None = None,
    scatterers: np.ndarray | None = None,
) -> PathSet:
    """LOS plus one single-bounce path per scatterer, pruned to the strongest per RRH.

    ``materials`` / ``scatterers`` override the scene's (for perturbed snapshots).
    NLOS phases are drawn from ``rng``; the LOS phase is the carrier phase of
    its path length.
    """
    u = np.asarray(u, dtype=float).reshape(3)
    scat = scene.scatterers if scatterers is None else np.asarray(scatterers, dtype=float).reshape(-1, 3)
    mats = scene.materials if materials is None else np.asarray(materials)
    lam = cfg.wavelength
    amp_table = np.asarray(cfg.material_amplitude, dtype=float)
    nlos_lin = 10.0 ** (-cfg.nlos_loss_db / 20.0)
    rain_lin = 10.0 ** (-cfg.rain_attenuation_db / 20.0) if rain else 1.0

    n_s = len(scat)
    # one phase per scatterer per RRH, drawn up front so skipping paths never shifts the stream
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(len(scene.rrhs), n_s))
    d_us = np.linalg.norm(scat - u, axis=1) if n_s else np.zeros(0)

    sets = []
    for m, b in enumerate(scene.rrhs):
        gains, delays, azs, els, los = [], [], [], [], []
        v = u - b
        d = float(np.linalg.norm(v))
        if d <= 0.0:
            logger.warning("transmitter coincides with RRH %d; LOS skipped", m)
        else:
            az, el = arrival_angles(v)
            amp = lam / (4.0 * np.pi * d) * rain_lin
            gains.append(amp * np.exp(-2j * np.pi * d / lam))
            delays.append(d / SPEED_OF_LIGHT)
            azs.append(float(az))
            els.append(float(el))
            los.append(True)
        if n_s:
            w = scat - b
            d_sb = np.linalg.norm(w, axis=1)
            ok = (d_us > 0.0) & (d_sb > 0.0)
            for s in np.flatnonzero(~ok):
                logger.warning("degenerate bounce geometry at scatterer %d, RRH %d; path skipped", s, m)
            total = d_us + d_sb
            az_s, el_s = arrival_angles(np.where(ok[:, None], w, 1.0))
            amp_s = amp_table[mats] * lam / (4.0 * np.pi * np.where(ok, total, 1.0)) * nlos_lin
            g_s = amp_s * np.exp(1j * phases[m])
            for s in np.flatnonzero(ok):
                gains.append(g_s[s])
                delays.append(total[s] / SPEED_OF_LIGHT)
                azs.append(az_s[s])
                els.append(el_s[s])
                los.append(False)
        if not gains:
            continue
        ps = PathSet.from_lists(gains, delays, azs, els, np.full(len(gains), m), los)
        # strongest first; ties broken by delay then original (scatterer) order
        order = np.lexsort((np.arange(len(ps)), ps.delay, -np.abs(ps.gain)))
        sets.append(ps.subset(order[: cfg.max_paths]))
    if not sets:
        return PathSet.from_lists([], [], [], [])
    return PathSet.concat(*sets)


def channel_matrix(paths: PathSet, geom: ArrayGeometry, cfg: PhysicsConfig, n_rrh: int | None = None) -> ChannelMatrix:
    """Frequency response on the active subcarriers, RRH blocks stacked row-wise."""
    if len(paths) == 0:
        raise ValueError("channel_matrix needs at least one path")
    ks = cfg.active_subcarriers
    if len(ks) == 0:
        raise ValueError("no active subcarriers")
    df = cfg.subcarrier_spacing
    n_rrh = int(paths.rrh.max()) + 1 if n_rrh is None else n_rrh
    n_el = geom.n_elements
    H = np.zeros((n_rrh * n_el, len(ks)), dtype=complex)
    a = steering_vector(paths.az, paths.el, geom)  # (L, n_el)
    phase = np.exp(2j * np.pi * df * np.outer(paths.delay, ks))  # (L, K)
    for m in range(n_rrh):
        sel = paths.rrh == m
        if not np.any(sel):
            continue
        block = (a[sel] * paths.gain[sel, None]).T @ phase[sel]
        H[m * n_el : (m + 1) * n_el] = block
    return ChannelMatrix(H, ks, df)


def perturb_scene(
    scene: Scene,
    sigma_z: float,
    sigma_n: float,
    rng: np.random.Generator,
    n_materials: int = len(MATERIALS),
    p_rain: float = 0.0,
) -> tuple[Scene, bool]:
    """One snapshot of the dynamic environment.

    Movable scatterers and every transmitter get i.i.d. Gaussian coordinate
    offsets, all scatterer materials are redrawn uniformly, and a rain flag is
    drawn with probability ``p_rain``. The draw order is fixed, so a generator
    seeded from ``(seed, t)`` reproduces the snapshot exactly.
    """
    if sigma_z < 0 or sigma_n < 0:
        raise ValueError("perturbation std must be non-negative")
    scat = scene.scatterers.copy()
    z = rng.normal(0.0, 1.0, size=(len(scene.movable), 3)) * sigma_z
    scat[scene.movable] += z
    tx = scene.transmitters + rng.normal(0.0, 1.0, size=scene.transmitters.shape) * sigma_n
    mats = rng.integers(0, n_materials, size=len(scat))
    rain = bool(rng.random() < p_rain)
    return replace(scene, transmitters=tx, scatterers=scat, materials=mats), rain


def _power_weights(paths: PathSet) -> np.ndarray:
    p = np.abs(paths.gain) ** 2
    total = p.sum()
    if total <= 0:
        return np.full(len(p), 1.0 / len(p))
    return p / total


def rms_delay_spread(paths: PathSet) -> float:
    """Power-weighted RMS delay spread, delays referenced to the strongest path."""
    if len(paths) == 0:
        raise ValueError("need at least one path")
    w = _power_weights(paths)
    tau = paths.delay - paths.delay[np.argmax(w)]
    mean_tau = np.sum(w * tau)
    return float(np.sqrt(max(np.sum(w * (tau - mean_tau) ** 2), 0.0)))


def rms_azimuth_spread(paths: PathSet) -> float:
    """Power-weighted RMS azimuth spread (linear statistics, radians)."""
    if len(paths) == 0:
        raise ValueError("need at least one path")
    w = _power_weights(paths)
    mean_az = np.sum(w * paths.az)
    return float(np.sqrt(max(np.sum(w * (paths.az - mean_az) ** 2), 0.0)))


def received_power_dbm(paths: PathSet, tx_power_dbm: float) -> float:
    """Transmit power plus total path gain in dB; ``-inf`` when every gain is zero."""
    p = float(np.sum(np.abs(paths.gain) ** 2))
    if p <= 0.0:
        return float("-inf")
    return tx_power_dbm + 10.0 * np.log10(p)
