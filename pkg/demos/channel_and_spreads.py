"""
Geometric multipath channel and its spreads
===========================================

A single RRH with a 2 x 4 planar array looks at one transmitter through the
line-of-sight path and single-bounce reflections off scatterers. We build the
scene used by the ``tiny`` preset, look at the strongest paths and then track
the RMS delay and azimuth spread over environment snapshots.
"""

import numpy as np

from witloc import dataset as D
from witloc.channel import ArrayGeometry, channel_matrix, rms_azimuth_spread, rms_delay_spread, steering_vector
from witloc.config import load_config

cfg = load_config(preset="tiny")
phys = cfg.physics()
geom = ArrayGeometry(cfg.Mx, cfg.Mz, phys.wavelength)
print(f"carrier {cfg.fc / 1e9} GHz, wavelength {phys.wavelength * 100:.2f} cm")
print(f"subcarrier spacing {phys.subcarrier_spacing} Hz, active subcarriers {len(phys.active_subcarriers)}")

# Steering vectors have unit-modulus entries; broadside (az = 0, el = 90 deg)
# is all ones because every element sees the same phase.
print("broadside steering", np.round(steering_vector(0.0, np.pi / 2, geom), 12))

scene = D.build_scene(cfg)
snap, rain = D.snapshot(cfg, scene, t=0)
paths = D.sample_paths(cfg, snap, rain, r=0, t=0)
print("\nstrongest paths of transmitter 0 (snapshot 0)")
for g, tau, az, los in zip(paths.gain, paths.delay, paths.az, paths.is_los):
    print(f"  |gain| {abs(g):.3e}  delay {tau * 1e9:7.1f} ns  azimuth {np.degrees(az):6.1f} deg" + ("  LOS" if los else ""))

H = channel_matrix(paths, geom, phys).entries
print("channel matrix", H.shape, "mean |h|", np.abs(H).mean())

# Moving scatterers, redrawn materials and rain make the spreads fluctuate.
print("\n t   tau_rms (ns)   phi_rms (deg)")
for t in range(cfg.T):
    snap, rain = D.snapshot(cfg, scene, t)
    p = D.sample_paths(cfg, snap, rain, 0, t)
    print(f"{t:2d}   {rms_delay_spread(p) * 1e9:10.2f}   {np.degrees(rms_azimuth_spread(p)):10.2f}")
