"""
From scene to training file
===========================

``dataset.prepare`` generates one sample per transmitter location and
snapshot, realifies each channel matrix into ``[Re | Im | Abs]`` rows per
subcarrier, splits the samples and scales every feature part by its peak
magnitude. The result round-trips through a small binary file.
"""

import tempfile
from pathlib import Path

import numpy as np

from witloc import dataset as D
from witloc.config import load_config

cfg = load_config(preset="tiny", overrides=["R=40", "T=5"])
ds = D.prepare(cfg)

print("samples", len(ds), "discarded", ds.n_discarded)
print("feature tensor", ds.features.shape, ds.features.dtype)
print("scale (re, im, abs)", ds.scale)
print("split train/val/test", len(ds.train_idx), len(ds.val_idx), len(ds.holdout_test_idx))

# After scaling every part peaks at exactly one.
for k, name in enumerate(("real", "imag", "abs")):
    print(f"  max |{name}| = {np.abs(ds.part(k)).max():.6f}")

# Labels live in [0, 1]^2; unscaling recovers meters.
print("first labels (scaled)", ds.labels[:2])
print("first labels (m)", D.unscale_labels(ds.labels[:2], ds.bounds))

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "tiny.wds"
    D.save(ds, path)
    back = D.load(path)
    print("file bytes", path.stat().st_size, "==", D.file_size(len(ds), ds.n_active, ds.n_antennas, len(ds.train_idx) + len(ds.test_idx)))
    print("round trip identical:", back.equals(ds))
