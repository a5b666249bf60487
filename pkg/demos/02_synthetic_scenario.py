"""
The synthetic street scene.

Vehicles drive along a straight road 8 m from the base station at 3 to
18 km/h. Each slot yields a LiDAR-like feature frame and the oracle beam.
Sliding windows of 8 frames (plus 3 zero frames for the future slots) form
the dataset, split 70/15/15 by trajectory.
"""

import sys
import time

import numpy as np

from dfkd_beam.scenario import (ScenarioConfig, lidar_features, make_dataset, read_dataset_header, save_dataset,
                                simulate_trajectory, slot_labels, trajectory_seed)

out = sys.argv[1] if len(sys.argv) > 1 else "scenario.bin"
cfg = ScenarioConfig()

states = simulate_trajectory(cfg, trajectory_seed(cfg.seed, 0))
labels = slot_labels(states, cfg)
print(f"trajectory 0: speed {states[0].speed_kmh:.1f} km/h, x from {states[0].x:.1f} to {states[-1].x:.1f} m")
print("beams every 5th slot:", labels[::5].tolist())
frame = lidar_features(states[0], cfg)
print("first frame (range, sin, cos, speed):", np.round(frame[:4], 3), " ring peak at bin", int(frame[4:].argmax()))

t0 = time.perf_counter()
ds = make_dataset(cfg)
print(f"\n{len(ds)} windows of shape {ds.x.shape[1:]} in {time.perf_counter() - t0:.1f}s; split counts {ds.counts()}")
save_dataset(ds, out)
h = read_dataset_header(out)
print(f"wrote {out}; header says {h['counts']} with config hash {h['config_hash']}")

# how learnable is the current beam from the last frame alone?
xtr, ytr = ds.split("train")
xte, yte = ds.split("test")
a, b = xtr[:, cfg.obs_len - 1], xte[:500, cfg.obs_len - 1]
d = (b ** 2).sum(1)[:, None] + (a ** 2).sum(1)[None] - 2 * b @ a.T
print(f"1-nearest-neighbour top-1 on the current beam: {np.mean(ytr[d.argmin(1), 0] == yte[:500, 0]):.3f}")
