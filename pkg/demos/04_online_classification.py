"""
Classifying a partially observed vehicle online
===============================================

Streams one held-out left-turning vehicle through the classifier frame by
frame and plots the normalized distance to each cluster together with the
two exclusion thresholds. The decision defaults to "straight" until the
straight distance exceeds both thresholds; from then on the nearest
cluster wins.

Run:  python demos/04_online_classification.py
"""

from pathlib import Path

import numpy as np

from intersect_gp import (
    GeneratorConfig,
    OnlineClassifier,
    Sample,
    build_model,
    build_trajectory_set,
    canonicalize_labels,
    classification_time,
    endpoint_features,
    generate,
    homogenize,
    kmeans_pp,
    normalize_start_time,
)

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

# offline: build the model on 200 training vehicles
raw, _ = generate(GeneratorConfig(n_trajectories=200, seed=11))
kept, _ = homogenize([normalize_start_time(t) for t in raw])
tset = build_trajectory_set(kept)
features = endpoint_features(tset)
labeling = canonicalize_labels(kmeans_pp(features, 3, seed=0), features)
model = build_model(tset, labeling)

# online: a held-out left turn, streamed frame by frame
heldout, truth = generate(GeneratorConfig(n_trajectories=20, mix=(0.0, 1.0, 0.0), seed=555))
traj = normalize_start_time(heldout[0])

clf = OnlineClassifier(model)
rows = []
for t, x, y in zip(traj.times, traj.xs, traj.ys):
    clf.ingest(Sample(float(t), np.array([x, y]), traj.id))
    if clf.grid_cursor >= 1:
        d = clf.classify()
        rows.append((t, *d.distances, d.cluster, d.excluded_straight))
        if len(rows) in (1, 10, 20, 40, len(traj)):
            names = {0: "right", 1: "left", 2: "straight"}
            print(f"t={t:4.2f}s  decision={names[d.cluster]:8s}  "
                  f"D=[{d.distances[0]:5.2f} {d.distances[1]:5.2f} {d.distances[2]:5.2f}] "
                  f"thr=[{d.distances[3]:5.2f} {d.distances[4]:5.2f}]")

ct = classification_time(traj, model, truth[0])
print(f"\nclassification time (earliest held-correct decision): {ct:.2f}s")

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

arr = np.array([r[:6] for r in rows])
fig, ax = plt.subplots(figsize=(8, 4.5))
for idx, (label, color) in enumerate(
    [("right cluster", "tab:red"), ("left cluster", "tab:blue"), ("straight cluster", "tab:olive")]
):
    ax.plot(arr[:, 0], arr[:, 1 + idx], color=color, label=label)
ax.plot(arr[:, 0], arr[:, 4], "k--", label="threshold left/center")
ax.plot(arr[:, 0], arr[:, 5], "k:", label="threshold right/center")
ax.axvline(ct, color="gray", lw=1, label=f"classification time {ct:.2f}s")
ax.set_xlabel("observation time [s]")
ax.set_ylabel("normalized distance")
ax.set_title("Online distances for a left-turning vehicle")
ax.legend(fontsize=8)
fig.tight_layout()
fig.savefig(OUT / "online_distances.png", dpi=120)
print(f"wrote {OUT / 'online_distances.png'}")
