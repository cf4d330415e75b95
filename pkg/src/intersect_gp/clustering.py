"""k-means++ labeling of reconstructed trajectories by their endpoints.

The number of behavior classes at a single-source intersection is set by
its geometry (three destination lanes -> three clusters), and trajectories
separate cleanly when compared at just two times: where they enter and
where they end up. Features are therefore the reconstructed mean positions
at the initial and terminal times, clustered with k-means++ and then
reindexed into a fixed canonical order (0 = rightmost turn, 1 = leftmost
turn, 2 = straight) so downstream code can rely on the indices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ClusterLabeling",
    "DegenerateClusteringError",
    "endpoint_features",
    "kmeans_pp",
    "canonicalize_labels",
]

N_RESTARTS = 10
MAX_LLOYD_ITER = 100


class DegenerateClusteringError(RuntimeError):
    """Every restart produced an empty cluster."""


@dataclass
class ClusterLabeling:
    """Cluster assignment for a trajectory set."""

    labels: np.ndarray  # (J,) ints in [0, k)
    centers: np.ndarray  # (k, d)
    k: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        self.centers = np.asarray(self.centers, dtype=float)
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.k):
            raise ValueError("labels must lie in [0, k)")
        counts = np.bincount(self.labels, minlength=self.k)
        if np.any(counts == 0):
            raise ValueError("every cluster must be nonempty")

    def members_of(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster)


def endpoint_features(tset, t_start: float = 0.0, t_end: float = 3.0) -> np.ndarray:
    """Feature matrix of reconstructed positions at two times.

    Row j is (x_j(t_start), y_j(t_start), x_j(t_end), y_j(t_end)). All
    entries are meters in one frame, so no scaling is applied.
    """
    if not t_start < t_end:
        raise ValueError(f"t_start must be below t_end, got {t_start} >= {t_end}")
    mx, my = tset.evaluate(np.array([t_start, t_end]))
    return np.column_stack([mx[:, 0], my[:, 0], mx[:, 1], my[:, 1]])


def _seed_centers(features: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: subsequent centers drawn with prob proportional
    to squared distance from the nearest already-chosen center."""
    n = features.shape[0]
    centers = np.empty((k, features.shape[1]))
    centers[0] = features[rng.integers(n)]
    d2 = np.sum((features - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = int(rng.integers(n))
        centers[i] = features[idx]
        d2 = np.minimum(d2, np.sum((features - centers[i]) ** 2, axis=1))
    return centers


def _lloyd(features: np.ndarray, centers: np.ndarray, k: int):
    """Lloyd iterations until assignments stabilize; None on empty cluster."""
    labels = None
    for _ in range(MAX_LLOYD_ITER):
        d2 = np.sum((features[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(d2, axis=1)
        counts = np.bincount(new_labels, minlength=k)
        if np.any(counts == 0):
            return None, None, None
        for c in range(k):
            centers[c] = features[new_labels == c].mean(axis=0)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
    wcss = float(np.sum((features - centers[labels]) ** 2))
    return labels, centers, wcss


def kmeans_pp(features: np.ndarray, k: int, seed: int) -> ClusterLabeling:
    """Deterministic k-means++ with Lloyd refinement, best of 10 restarts.

    Each restart r draws from its own generator seeded by (seed, r); the
    result with minimum within-cluster sum of squares wins, ties going to
    the lowest restart index, so the labeling is reproducible bit for bit.

    Raises:
        ValueError: fewer points than clusters.
        DegenerateClusteringError: every restart left a cluster empty.
    """
    features = np.asarray(features, dtype=float)
    n = features.shape[0]
    if k < 1:
        raise ValueError("k must be at least 1")
    if n < k:
        raise ValueError(f"cannot form {k} clusters from {n} points")

    best = None
    for restart in range(N_RESTARTS):
        rng = np.random.default_rng([seed, restart])
        centers = _seed_centers(features, k, rng)
        labels, centers, wcss = _lloyd(features, centers, k)
        if labels is None:
            continue
        if best is None or wcss < best[0]:
            best = (wcss, labels, centers)
    if best is None:
        raise DegenerateClusteringError(
            f"all {N_RESTARTS} restarts produced an empty cluster (k={k}, n={n})"
        )
    return ClusterLabeling(best[1], best[2], k)


def _turn_angles(labeling: ClusterLabeling, features: np.ndarray) -> np.ndarray:
    """Signed angle of each cluster's initial-to-terminal displacement,
    measured against the mean displacement direction over clusters."""
    disps = np.empty((labeling.k, 2))
    for c in range(labeling.k):
        rows = features[labeling.members_of(c)]
        init = rows[:, 0:2].mean(axis=0)
        term = rows[:, 2:4].mean(axis=0)
        disps[c] = term - init
    norms = np.linalg.norm(disps, axis=1)
    units = disps / np.where(norms > 0, norms, 1.0)[:, None]
    ref = units.sum(axis=0)
    if np.linalg.norm(ref) < 1e-12:
        # opposing displacements cancel; fall back to the largest cluster
        counts = np.bincount(labeling.labels, minlength=labeling.k)
        ref = units[int(np.argmax(counts))]
    return np.arctan2(
        ref[0] * disps[:, 1] - ref[1] * disps[:, 0],
        ref[0] * disps[:, 0] + ref[1] * disps[:, 1],
    )


def canonicalize_labels(labeling: ClusterLabeling, features: np.ndarray) -> ClusterLabeling:
    """Reindex clusters into the fixed turn order used everywhere else.

    Clusters are ranked by the signed angle of their mean displacement:
    the most clockwise (rightmost turn) becomes index 0, the most
    counterclockwise (leftmost turn) becomes index 1, and the remaining
    clusters (straight-most first) fill 2, 3, ... Exact angle ties break on
    the terminal x coordinate. Invariant under permutations of the input
    labels; a single cluster is returned unchanged.
    """
    if labeling.k == 1:
        return labeling
    angles = _turn_angles(labeling, features)
    term_x = np.array(
        [features[labeling.members_of(c), 2].mean() for c in range(labeling.k)]
    )
    order = sorted(range(labeling.k), key=lambda c: (angles[c], term_x[c]))

    canonical = np.empty(labeling.k, dtype=int)
    canonical[order[0]] = 0
    canonical[order[-1]] = 1
    for rank, c in enumerate(order[1:-1]):
        canonical[c] = 2 + rank

    new_centers = np.empty_like(labeling.centers)
    new_centers[canonical] = labeling.centers
    return ClusterLabeling(canonical[labeling.labels], new_centers, labeling.k)
