"""Plain-text ``key = value`` configuration covering scenario, model and training.

Every key has a default (see :class:`Config`); a file only needs to list the
keys it changes. Unknown keys are an error. ``#`` starts a comment.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

from .channel import DEFAULT_MATERIAL_AMPLITUDE, MATERIALS, PhysicsConfig

PRESETS = ("tiny", "s-static", "s-dynamic", "hb-das")


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    # scenario
    R: int = 100  # transmitter locations
    T: int = 20  # environment snapshots
    S: int = 24  # scatterers
    S_moving: int = 12  # of which move between snapshots
    M: int = 1  # RRHs
    Mx: int = 2
    Mz: int = 4
    fc: float = 3.5e9
    B: float = 20e6
    Nc: int = 256
    stride: int = 16
    L: int = 4
    sigma_z: float = 1.0
    sigma_n: float = 0.05
    p_rain: float = 0.3
    rain_db: float = 3.0
    nlos_loss_db: float = 0.0
    tx_power_dbm: float = 20.0
    power_threshold_dbm: float = -130.0
    roi_xmin: float = 0.0
    roi_xmax: float = 100.0
    roi_ymin: float = 0.0
    roi_ymax: float = 100.0
    tx_height: float = 1.5
    rrh_height: float = 20.0
    rrh_offset: float = 10.0
    tx_layout: str = "random"  # random | grid
    grid_spacing: float = 1.0
    scatterer_max_height: float = 15.0
    materials: str = ",".join(MATERIALS)
    material_amplitudes: str = ",".join(str(DEFAULT_MATERIAL_AMPLITUDE[m]) for m in MATERIALS)
    norm_mode: str = "all"  # all | train
    split_ratio: float = 0.75
    # model
    D: int = 64
    dropout: float = 0.1
    base_dropout: float = 0.2
    pooling: str = "avg"  # avg | lid
    ln_gamma: float = 1.0
    ln_beta: float = 1e-4
    learn_ln: bool = False
    blocks: int = 1
    residual: bool = True
    # training
    lr: float = 3e-4
    batch: int = 512
    epochs: int = 300
    wit_patience: int = 0
    base_patience: int = 80
    weight_decay: float = 1e-4
    seed: int = 0

    @property
    def n_antennas(self) -> int:
        return self.Mx * self.Mz * self.M

    @property
    def n_active(self) -> int:
        return len(range(0, self.Nc, self.stride))

    @property
    def material_names(self) -> tuple[str, ...]:
        return tuple(s.strip() for s in self.materials.split(",") if s.strip())

    @property
    def bounds(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return (self.roi_xmin, self.roi_xmax), (self.roi_ymin, self.roi_ymax)

    def physics(self) -> PhysicsConfig:
        amps = tuple(float(s) for s in self.material_amplitudes.split(",") if s.strip())
        return PhysicsConfig(
            carrier_hz=self.fc,
            bandwidth_hz=self.B,
            n_subcarriers=self.Nc,
            subcarrier_stride=self.stride,
            max_paths=self.L,
            rain_attenuation_db=self.rain_db,
            nlos_loss_db=self.nlos_loss_db,
            material_amplitude=amps,
        )

    def validate(self) -> "Config":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.R >= 1 and self.T >= 1, "R and T must be positive")
        need(0 <= self.S_moving <= self.S, "S_moving must lie in [0, S]")
        need(self.M >= 1 and self.Mx >= 1 and self.Mz >= 1, "array sizes must be positive")
        need(self.Nc >= 1 and 1 <= self.stride, "Nc and stride must be positive")
        need(self.L >= 1, "L must be positive")
        need(self.sigma_z >= 0 and self.sigma_n >= 0, "noise std must be non-negative")
        need(0.0 <= self.p_rain <= 1.0, "p_rain must be a probability")
        need(self.roi_xmin < self.roi_xmax and self.roi_ymin < self.roi_ymax, "empty region of interest")
        need(self.tx_layout in ("random", "grid"), f"unknown tx_layout {self.tx_layout!r}")
        need(self.grid_spacing > 0, "grid_spacing must be positive")
        names = self.material_names
        need(len(names) >= 1, "need at least one material")
        amps = [float(s) for s in self.material_amplitudes.split(",") if s.strip()]
        need(len(amps) == len(names), "one amplitude per material")
        need(all(0.0 < a <= 1.0 for a in amps), "material amplitudes must lie in (0, 1]")
        need(self.norm_mode in ("all", "train"), f"unknown norm_mode {self.norm_mode!r}")
        need(0.0 < self.split_ratio < 1.0, "split_ratio must lie in (0, 1)")
        need(self.D >= 2, "D must be at least 2")
        need(0.0 <= self.dropout < 1.0 and 0.0 <= self.base_dropout < 1.0, "dropout must lie in [0, 1)")
        need(self.pooling in ("avg", "lid"), f"unknown pooling {self.pooling!r}")
        need(self.blocks >= 1, "blocks must be positive")
        need(self.lr >= 0 and self.weight_decay >= 0, "lr and weight_decay must be non-negative")
        need(self.batch >= 1 and self.epochs >= 1, "batch and epochs must be positive")
        need(self.wit_patience >= 0 and self.base_patience >= 0, "patience must be non-negative")
        return self

    def with_overrides(self, **kw) -> "Config":
        return dataclasses.replace(self, **kw).validate()

    def dumps(self) -> str:
        return "".join(f"{f.name} = {_fmt(getattr(self, f.name))}\n" for f in fields(self))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


_TYPES = {f.name: f.type for f in fields(Config)}


def _coerce(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if kind == "int":
            return int(float(raw)) if "e" in raw.lower() else int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return raw


def parse_pairs(lines, origin: str = "<config>") -> dict:
    out = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"{origin}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, raw)
    return out


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("witloc.presets").joinpath(f"{name}.cfg").read_text()


def load_config(path: str | Path | None = None, preset: str | None = None, overrides=()) -> Config:
    """Defaults, then the preset, then the file, then ``key=value`` overrides."""
    values: dict = {}
    if preset:
        values.update(parse_pairs(preset_text(preset).splitlines(), f"preset:{preset}"))
    if path is not None:
        values.update(parse_pairs(Path(path).read_text().splitlines(), str(path)))
    if overrides:
        values.update(parse_pairs(list(overrides), "<override>"))
    return Config(**values).validate()
