"""Attention-based localizer over per-subcarrier CSI embeddings.

Pipeline for one channel ``h`` of shape ``(N_c', 3 N_r)``::

    e = h E                          per-subcarrier embedding
    e_hat = e + G                    learnable positional table
    [e0; e_hat]                      optional location-identification token
    o = Attn(LN(e_hat))              single head, W_q = W_k = W_v = W
    o_bar = MLP1(LN(o + e_hat)) + (o + e_hat)
    v = mean(o_bar[subcarriers]) | o_bar[0]
    u = relu(v M2 + b2) W2 + b_out

All functions accept a leading batch axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .numcore import Tensor

AVERAGE = "avg"
LID = "lid"
OUT_DIM = 2


def uniform_init(rng: np.random.Generator, fan_in: int, shape, name: str) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


def zeros(shape, name: str) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True, name=name)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = nc.matmul(x, w)
    return y if b is None else y + b


def param_count(params) -> int:
    """Number of learnable scalars in a name -> Tensor mapping."""
    return int(sum(p.size for p in params.values() if p.requires_grad))


# ---------------------------------------------------------------------------
# building blocks


def embed(features: Tensor, E: Tensor) -> Tensor:
    return nc.matmul(nc.as_tensor(features), E)


def add_positional(e: Tensor, G: Tensor) -> Tensor:
    if e.shape[-2:] != G.shape:
        raise nc.DimensionError(f"positional table {G.shape} does not match embeddings {e.shape}")
    return e + G


def prepend_lid(e_hat: Tensor, e0: Tensor) -> Tensor:
    """Stack the LID vector (shape ``(1, D)``) on top of the subcarrier rows."""
    lead = e_hat.shape[:-2]
    token = e0 if not lead else nc.add(e0, np.zeros(lead + e0.shape))
    return nc.concat([token, e_hat], axis=-2)


def attention(e_hat: Tensor, W: Tensor, gamma=1.0, beta=0.0, details: bool = False):
    """Tied-projection self-attention on layer-normalised inputs.

    With ``details`` the return value is ``(o, weights, scores)``.
    """
    e_bar = nc.layer_norm(e_hat, gamma, beta)
    v = nc.matmul(e_bar, W)
    scores = nc.scale(nc.matmul(v, nc.transpose_last(v)), 1.0 / math.sqrt(W.shape[-1]))
    weights = nc.softmax_rows(scores)
    o = nc.matmul(weights, v)
    return (o, weights, scores) if details else o


def mlp1(x: Tensor, p: dict, prefix: str, rate: float, rng, training: bool) -> Tensor:
    h = nc.relu(linear(x, p[prefix + "W1"], p[prefix + "b1"]))
    h = nc.dropout(h, rate, rng, training)
    return linear(h, p[prefix + "W2"], p[prefix + "b2"])


def transformer_block(
    e_hat: Tensor,
    p: dict,
    prefix: str = "blk0.",
    gamma=1.0,
    beta=0.0,
    rate: float = 0.0,
    rng=None,
    training: bool = False,
    residual: bool = True,
) -> Tensor:
    """``MLP1(LN(o + e_hat)) + (o + e_hat)``.

    ``residual=False`` is the ablation with no skip paths:
    ``MLP1(LN(o))``.
    """
    o = attention(e_hat, p[prefix + "W"], gamma, beta)
    s = o + e_hat if residual else o
    o_hat = nc.layer_norm(s, gamma, beta)
    out = mlp1(o_hat, p, prefix, rate, rng, training)
    return out + s if residual else out


def pool(o_bar: Tensor, mode: str, has_lid: bool) -> Tensor:
    """Collapse the token axis to a ``(..., 1, D)`` summary."""
    if mode == LID:
        if not has_lid:
            raise ValueError("LID pooling requires the LID token")
        return nc.take_row(o_bar, 0)
    if mode != AVERAGE:
        raise ValueError(f"unknown pooling mode {mode!r}")
    rows = o_bar[..., 1:, :] if has_lid else o_bar
    return nc.mean(rows, axis=-2, keepdims=True)


def head(v: Tensor, p: dict, rate: float = 0.0, rng=None, training: bool = False) -> Tensor:
    h = nc.relu(linear(v, p["head.M"], p["head.b"]))
    h = nc.dropout(h, rate, rng, training)
    return linear(h, p["head.W2"], p["head.bout"])


# ---------------------------------------------------------------------------
# model


@dataclass
class WiTConfig:
    n_active: int
    n_antennas: int
    dim: int = 64
    pooling: str = AVERAGE
    blocks: int = 1
    dropout: float = 0.1
    ln_gamma: float = 1.0
    ln_beta: float = 1e-4
    learn_ln: bool = False
    residual: bool = True
    use_positional: bool = True


class WiT:
    """Wireless transformer localizer; parameters live in ``self.params``."""

    kind = "wit"

    def __init__(self, cfg: WiTConfig, seed: int = 0, params: dict | None = None):
        self.cfg = cfg
        self.params = params if params is not None else self.init_params(cfg, np.random.default_rng(seed))

    @staticmethod
    def init_params(cfg: WiTConfig, rng: np.random.Generator) -> dict:
        D, F, N = cfg.dim, 3 * cfg.n_antennas, cfg.n_active
        p = {"E": uniform_init(rng, F, (F, D), "E")}
        G = Tensor(rng.normal(0.0, 0.02, size=(N, D)), requires_grad=cfg.use_positional, name="G")
        if not cfg.use_positional:
            G.data[:] = 0.0
        p["G"] = G
        if cfg.pooling == LID:
            p["e0"] = Tensor(rng.normal(0.0, 0.02, size=(1, D)), requires_grad=True, name="e0")
        for i in range(cfg.blocks):
            pre = f"blk{i}."
            p[pre + "W"] = uniform_init(rng, D, (D, D), pre + "W")
            p[pre + "W1"] = uniform_init(rng, D, (D, D), pre + "W1")
            p[pre + "b1"] = zeros((D,), pre + "b1")
            p[pre + "W2"] = uniform_init(rng, D, (D, D), pre + "W2")
            p[pre + "b2"] = zeros((D,), pre + "b2")
        p["head.M"] = uniform_init(rng, D, (D, D), "head.M")
        p["head.b"] = zeros((D,), "head.b")
        p["head.W2"] = uniform_init(rng, D, (D, OUT_DIM), "head.W2")
        p["head.bout"] = zeros((OUT_DIM,), "head.bout")
        p["ln.gamma"] = Tensor(np.asarray(cfg.ln_gamma, dtype=float), requires_grad=cfg.learn_ln, name="ln.gamma")
        p["ln.beta"] = Tensor(np.asarray(cfg.ln_beta, dtype=float), requires_grad=cfg.learn_ln, name="ln.beta")
        return p

    def parameters(self) -> list[Tensor]:
        return [t for t in self.params.values() if t.requires_grad]

    def param_count(self) -> int:
        return param_count(self.params)

    def forward(self, features, training: bool = False, rng=None) -> Tensor:
        """``(..., N_c', 3 N_r)`` features -> ``(..., 2)`` scaled position."""
        p, c = self.params, self.cfg
        x = nc.as_tensor(features)
        if x.shape[-2:] != (c.n_active, 3 * c.n_antennas):
            raise nc.DimensionError(f"expected (..., {c.n_active}, {3 * c.n_antennas}) features, got {x.shape}")
        h = add_positional(embed(x, p["E"]), p["G"])
        has_lid = c.pooling == LID
        if has_lid:
            h = prepend_lid(h, p["e0"])
        g, b = p["ln.gamma"], p["ln.beta"]
        for i in range(c.blocks):
            h = transformer_block(h, p, f"blk{i}.", g, b, c.dropout, rng, training, c.residual)
        v = pool(h, c.pooling, has_lid)
        out = head(v, p, c.dropout, rng, training)
        return nc.reshape(out, out.shape[:-2] + (OUT_DIM,))

    __call__ = forward

    def meta(self) -> dict:
        return {"kind": self.kind, **self.cfg.__dict__}
