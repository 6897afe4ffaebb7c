"""
WiT versus a plain MLP on the tiny scenario
===========================================

Trains WiT with average pooling, WiT with a learnable [LID] token and the
four-layer baseline on the same split, then reports test MAE, the 95th
percentile error and a few ECDF points. Pass ``--full`` for the preset's
60 epochs (about a minute per WiT model); the default is a quick 15.
"""

import sys

import numpy as np

from witloc import dataset as D
from witloc.cli import build_model, method_label
from witloc.config import load_config
from witloc.training import FitConfig, ecdf, evaluate, fit, mae, percentile95

epochs = None if "--full" in sys.argv else 15
cfg = load_config(preset="tiny", overrides=[f"epochs={epochs}"] if epochs else [])
ds = D.prepare(cfg)
print(f"{len(ds.train_idx)} training samples, {len(ds.holdout_test_idx)} test samples, {cfg.epochs} epochs")

print(f"\n{'method':<12} {'MAE(m)':>8} {'p95(m)':>8}   error at ECDF 0.25 / 0.5 / 0.75")
for kind, pooling in (("wit", "avg"), ("wit", "lid"), ("base", "avg")):
    m = build_model(kind, pooling, cfg, ds)
    patience = cfg.base_patience if kind == "base" else cfg.wit_patience
    fit(m, ds, FitConfig(cfg.epochs, cfg.batch, cfg.lr, cfg.weight_decay, patience, cfg.seed))
    errs = evaluate(m, ds, ds.holdout_test_idx)
    c = ecdf(errs)
    qs = [c[np.argmax(c[:, 1] >= q), 0] for q in (0.25, 0.5, 0.75)]
    print(f"{method_label(m.meta()):<12} {mae(errs):8.2f} {percentile95(errs):8.2f}   " + " / ".join(f"{q:.1f}" for q in qs))
