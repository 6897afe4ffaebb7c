"""Plain MLP on the flattened realified channel, the comparator for :class:`~witloc.model.WiT`."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .model import OUT_DIM, linear, param_count, uniform_init, zeros

N_HIDDEN = 4


@dataclass
class BaseDNNConfig:
    n_active: int
    n_antennas: int
    dim: int = 64
    dropout: float = 0.2


class BaseDNN:
    """Four ``linear -> relu -> dropout`` layers of width ``dim`` and a linear output."""

    kind = "base"

    def __init__(self, cfg: BaseDNNConfig, seed: int = 0, params: dict | None = None):
        self.cfg = cfg
        self.params = params if params is not None else self.init_params(cfg, np.random.default_rng(seed))

    @property
    def in_dim(self) -> int:
        return self.cfg.n_active * 3 * self.cfg.n_antennas

    @staticmethod
    def init_params(cfg: BaseDNNConfig, rng: np.random.Generator) -> dict:
        widths = [cfg.n_active * 3 * cfg.n_antennas] + [cfg.dim] * N_HIDDEN
        p = {}
        for i in range(N_HIDDEN):
            p[f"fc{i}.W"] = uniform_init(rng, widths[i], (widths[i], widths[i + 1]), f"fc{i}.W")
            p[f"fc{i}.b"] = zeros((widths[i + 1],), f"fc{i}.b")
        p["out.W"] = uniform_init(rng, cfg.dim, (cfg.dim, OUT_DIM), "out.W")
        p["out.b"] = zeros((OUT_DIM,), "out.b")
        return p

    def parameters(self) -> list[nc.Tensor]:
        return [t for t in self.params.values() if t.requires_grad]

    def param_count(self) -> int:
        return param_count(self.params)

    def forward(self, features, training: bool = False, rng=None) -> nc.Tensor:
        x = nc.as_tensor(features)
        c = self.cfg
        if x.shape[-2:] == (c.n_active, 3 * c.n_antennas):
            lead = x.shape[:-2]
        elif x.shape[-1] == self.in_dim:
            lead = x.shape[:-1]
        else:
            raise nc.DimensionError(f"base DNN expects {self.in_dim} inputs, got shape {x.shape}")
        x = nc.reshape(x, (lead or (1,)) + (self.in_dim,))
        for i in range(N_HIDDEN):
            x = nc.relu(linear(x, self.params[f"fc{i}.W"], self.params[f"fc{i}.b"]))
            x = nc.dropout(x, self.cfg.dropout, rng, training)
        out = linear(x, self.params["out.W"], self.params["out.b"])
        return out if lead else nc.reshape(out, (OUT_DIM,))

    __call__ = forward

    def meta(self) -> dict:
        return {"kind": self.kind, **self.cfg.__dict__}
