"""
From raw tracks to an intersection traffic model
================================================

Builds the full offline pipeline on a few hundred simulated vehicles:
reconstruct every track, cluster by endpoint positions, then compute each
cluster's discretized Gaussian model (mean curve plus per-time confidence
ellipses) and the two exclusion-threshold sequences.

Run:  python demos/02_clustering_and_traffic_model.py
"""

from pathlib import Path

import numpy as np

from intersect_gp import (
    GeneratorConfig,
    build_model,
    build_trajectory_set,
    canonicalize_labels,
    endpoint_features,
    generate,
    homogenize,
    kmeans_pp,
    normalize_start_time,
)

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

raw, truth = generate(GeneratorConfig(n_trajectories=200, seed=11))
kept, discarded = homogenize([normalize_start_time(t) for t in raw])
print(f"{len(kept)} trajectories kept, {len(discarded)} discarded")

tset = build_trajectory_set(kept)

# cluster on positions at the initial and terminal times only
features = endpoint_features(tset, t_start=0.0, t_end=3.0)
labeling = canonicalize_labels(kmeans_pp(features, k=3, seed=0), features)
agree = np.mean(labeling.labels == np.array([truth[tid] for tid in tset.ids]))
print(f"clustering agreement with generator truth: {agree:.1%}")
for name, k in (("right", 0), ("left", 1), ("straight", 2)):
    print(f"  cluster {k} ({name}): {len(labeling.members_of(k))} members")

model = build_model(tset, labeling)
print(f"model: {model.k} intended trajectories on {model.grid.n} grid times, "
      f"thresholds: {sorted(model.thresholds)}")

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib.patches import Ellipse

fig, ax = plt.subplots(figsize=(7, 7))
colors = {0: "tab:red", 1: "tab:blue", 2: "tab:green"}
mx, my = tset.evaluate(model.grid.times)
for j, label in enumerate(labeling.labels):
    ax.plot(mx[j], my[j], color=colors[label], alpha=0.08, lw=0.8)
for it in model.intended:
    ax.plot(it.mean_x, it.mean_y, color="k", lw=1.5)
    for i in range(0, model.grid.n, 6):
        g = it.marginal(i)
        w = 4 * np.sqrt(max(g.cov[0, 0], 1e-12))
        h = 4 * np.sqrt(max(g.cov[1, 1], 1e-12))
        ax.add_patch(
            Ellipse(g.mean, w, h, facecolor=colors[it.cluster], alpha=0.25, edgecolor="none")
        )
ax.set_xlabel("x [m]")
ax.set_ylabel("y [m]")
ax.set_aspect("equal")
ax.set_title("Intersection traffic model: means and 2-sigma ellipses")
fig.tight_layout()
fig.savefig(OUT / "traffic_model.png", dpi=120)
print(f"wrote {OUT / 'traffic_model.png'}")
