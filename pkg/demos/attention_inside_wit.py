"""
Looking inside the wireless transformer
=======================================

Each active subcarrier becomes one token. A single tied-weight attention
block mixes the tokens, and the head maps the pooled token to a 2-D
position. Without the positional table the model cannot tell subcarriers
apart; this script shows both sides of that.
"""

import numpy as np

from witloc import model as M
from witloc.model import WiT, WiTConfig
from witloc.numcore import Tensor

rng = np.random.default_rng(1)
n_sub, n_ant = 6, 8
h = rng.normal(size=(n_sub, 3 * n_ant))

wit = WiT(WiTConfig(n_sub, n_ant, dim=16, pooling="avg"), seed=0)
print("parameters", wit.param_count())
print("prediction (scaled x, y)", wit.forward(h).data)

# Attention weights: rows are softmax distributions and the tied projection
# makes the score matrix symmetric.
e_hat = M.add_positional(M.embed(Tensor(h), wit.params["E"]), wit.params["G"])
_, weights, scores = M.attention(e_hat, wit.params["blk0.W"], details=True)
print("row sums", np.round(weights.data.sum(axis=1), 12))
print("score asymmetry", np.abs(scores.data - scores.data.T).max())

# Zero positional table + average pooling: token order no longer matters.
wit.params["G"].data[...] = 0.0
perm = rng.permutation(n_sub)
gap = np.abs(wit.forward(h).data - wit.forward(h[perm]).data).max()
print("permutation gap with G = 0:", gap)

wit.params["G"].data[...] = rng.normal(0, 0.5, wit.params["G"].shape)
gap = np.abs(wit.forward(h).data - wit.forward(h[perm]).data).max()
print("permutation gap with G != 0:", gap)
