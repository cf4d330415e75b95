"""The intersection traffic model: per-cluster Gaussian trajectory models.

Each behavior class (right turn, left turn, straight) gets a discretized
Gaussian process on a shared time grid: the empirical mean and empirical
covariance, over cluster members, of the reconstructed mean curves. On top
of those the model carries two per-time threshold sequences, built as
equal-weight Wasserstein barycenters between each turn class and the
straight class; the online classifier abandons its straight-ahead default
only when the observation is farther from straight than from both
thresholds.

Cluster indices are canonical throughout: 0 = right turn, 1 = left turn,
2 = straight.
"""

from __future__ import annotations

import datetime
import json
from dataclasses import dataclass, field

import numpy as np

from .metrics import BarycenterConvergenceError, GaussianDist, wasserstein_barycenter

__all__ = [
    "RIGHT",
    "LEFT",
    "STRAIGHT",
    "THRESHOLD_SIDES",
    "TimeGrid",
    "IntendedTrajectory",
    "TrafficModel",
    "Intention",
    "InsufficientClusterError",
    "ModelBuildError",
    "ModelSchemaError",
    "CorruptModelError",
    "build_intended",
    "build_model",
    "sample_intention",
    "save_model",
    "load_model",
]

RIGHT, LEFT, STRAIGHT = 0, 1, 2

# threshold id -> the turn cluster it separates from straight
THRESHOLD_SIDES = {"left_center": LEFT, "right_center": RIGHT}

SCHEMA_VERSION = "1.1"

_COV_SYMMETRY_TOL = 1e-10


class InsufficientClusterError(ValueError):
    """A cluster has fewer than two members, so no covariance exists."""


class ModelBuildError(RuntimeError):
    """Model construction failed; the message names the grid time."""


class ModelSchemaError(ValueError):
    """Model file carries an unsupported schema version."""


class CorruptModelError(ValueError):
    """Model file is damaged or structurally invalid."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform comparison times over the modeling horizon.

    Defaults to 60 points spanning [0, 3] s, matching a nominal 20 Hz
    camera over a 3 s horizon; ``rate`` is kept as metadata.
    """

    times: np.ndarray
    rate: float = 20.0

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.size < 2:
            raise ValueError("grid needs at least two times")
        steps = np.diff(times)
        if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
            raise ValueError("grid times must be uniformly increasing")
        object.__setattr__(self, "times", times)

    @classmethod
    def uniform(cls, horizon: float = 3.0, n: int = 60, rate: float = 20.0) -> "TimeGrid":
        if horizon <= 0 or n < 2:
            raise ValueError("horizon must be positive and n at least 2")
        return cls(np.linspace(0.0, horizon, n), rate)

    @property
    def n(self) -> int:
        return self.times.size

    @property
    def horizon(self) -> float:
        return float(self.times[-1])


@dataclass
class IntendedTrajectory:
    """Discretized Gaussian model of one behavior class on the grid."""

    cluster: int
    mean_x: np.ndarray  # (N,)
    mean_y: np.ndarray
    cov_x: np.ndarray  # (N, N)
    cov_y: np.ndarray
    member_count: int

    def __post_init__(self):
        n = self.mean_x.size
        for name in ("cov_x", "cov_y"):
            cov = getattr(self, name)
            if cov.shape != (n, n):
                raise ValueError(f"{name} shape {cov.shape} does not match grid size {n}")
            if np.max(np.abs(cov - cov.T), initial=0.0) > _COV_SYMMETRY_TOL:
                raise ValueError(f"{name} is not symmetric")
        if self.member_count < 2:
            raise ValueError("intended trajectory needs at least 2 members")

    def marginal(self, i: int) -> GaussianDist:
        """Planar Gaussian at grid index i (x and y treated independently)."""
        return GaussianDist(
            np.array([self.mean_x[i], self.mean_y[i]]),
            np.diag([max(self.cov_x[i, i], 0.0), max(self.cov_y[i, i], 0.0)]),
        )


@dataclass
class TrafficModel:
    """Intended trajectories for every cluster plus the threshold sequences."""

    grid: TimeGrid
    intended: list[IntendedTrajectory]
    thresholds: dict[str, list[GaussianDist]]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.grid.n
        for it in self.intended:
            if it.mean_x.size != n:
                raise ValueError(f"cluster {it.cluster} not on the model grid")
        for side, seq in self.thresholds.items():
            if len(seq) != n:
                raise ValueError(f"threshold {side} not on the model grid")

    @property
    def k(self) -> int:
        return len(self.intended)


@dataclass(frozen=True)
class Intention:
    """Distribution over planar position at one fixed time."""

    time: float
    dist_x: GaussianDist
    dist_y: GaussianDist


def build_intended(tset, labeling, k: int, grid: TimeGrid) -> IntendedTrajectory:
    """Empirical Gaussian model of cluster ``k`` on the grid.

    Evaluates the cluster members' reconstructed means at the grid times
    and takes the column-wise mean plus the empirical covariance over
    members (denominator J_k - 1), per dimension.

    Raises:
        InsufficientClusterError: fewer than two members.
    """
    member_idx = labeling.members_of(k)
    if member_idx.size < 2:
        raise InsufficientClusterError(
            f"cluster {k} has {member_idx.size} member(s); need at least 2"
        )
    members = [tset.members[i] for i in member_idx]
    curves_x = np.vstack([m.gp_x.predict_mean(grid.times) for m in members])
    curves_y = np.vstack([m.gp_y.predict_mean(grid.times) for m in members])

    mean_x = curves_x.mean(axis=0)
    mean_y = curves_y.mean(axis=0)
    cx = curves_x - mean_x
    cy = curves_y - mean_y
    denom = member_idx.size - 1
    cov_x = cx.T @ cx / denom
    cov_y = cy.T @ cy / denom
    # kill the ~1e-16 asymmetry from the matrix product
    cov_x = 0.5 * (cov_x + cov_x.T)
    cov_y = 0.5 * (cov_y + cov_y.T)
    return IntendedTrajectory(k, mean_x, mean_y, cov_x, cov_y, member_idx.size)


def build_model(tset, labeling, grid: TimeGrid | None = None) -> TrafficModel:
    """Assemble the full traffic model from a labeled trajectory set.

    Needs the canonical clusters 0 (right), 1 (left) and 2 (straight) to be
    present. The two threshold sequences are equal-weight Wasserstein
    barycenters of the per-time planar marginals: left/straight and
    right/straight.

    Raises:
        InsufficientClusterError: a cluster is too small.
        ModelBuildError: a threshold barycenter failed, naming the time.
    """
    if grid is None:
        grid = TimeGrid.uniform()
    if labeling.k < 3:
        raise ValueError(f"model needs the 3 canonical clusters, got k={labeling.k}")

    intended = [build_intended(tset, labeling, k, grid) for k in range(labeling.k)]
    straight = intended[STRAIGHT]

    thresholds: dict[str, list[GaussianDist]] = {}
    for side, turn_cluster in THRESHOLD_SIDES.items():
        turn = intended[turn_cluster]
        seq = []
        for i, t in enumerate(grid.times):
            try:
                seq.append(wasserstein_barycenter([turn.marginal(i), straight.marginal(i)]))
            except BarycenterConvergenceError as exc:
                raise ModelBuildError(f"threshold {side} at t={t:.3f}s: {exc}") from exc
        thresholds[side] = seq

    metadata = {
        "built_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "source_digest": tset.content_digest(),
        "k": labeling.k,
        "j": len(tset),
    }
    return TrafficModel(grid, intended, thresholds, metadata)


def sample_intention(model: TrafficModel, k: int, t_i: float) -> Intention:
    """Intention of cluster ``k`` at time ``t_i``.

    Mean and variance are linearly interpolated between grid points; off
    the grid both match the grid values exactly.

    Raises:
        ValueError: ``k`` out of range or ``t_i`` outside [0, horizon].
    """
    if not 0 <= k < model.k:
        raise ValueError(f"cluster index {k} out of range [0, {model.k})")
    times = model.grid.times
    if not times[0] <= t_i <= times[-1]:
        raise ValueError(f"time {t_i} outside model grid [{times[0]}, {times[-1]}]")
    it = model.intended[k]
    dists = []
    for mean, cov in ((it.mean_x, it.cov_x), (it.mean_y, it.cov_y)):
        mu = float(np.interp(t_i, times, mean))
        var = float(np.interp(t_i, times, np.maximum(np.diag(cov), 0.0)))
        dists.append(GaussianDist(np.array([mu]), np.array([[var]])))
    return Intention(t_i, dists[0], dists[1])


def _gaussian_to_json(g: GaussianDist) -> dict:
    return {"mean": g.mean.tolist(), "cov": g.cov.tolist()}


def save_model(model: TrafficModel, path) -> None:
    """Write the model as versioned JSON (schema 1.1)."""
    payload = {
        "version": SCHEMA_VERSION,
        "horizon": model.grid.horizon,
        "rate": model.grid.rate,
        "clusters": [
            {
                "k": it.cluster,
                "mean_x": it.mean_x.tolist(),
                "mean_y": it.mean_y.tolist(),
                "cov_x": it.cov_x.tolist(),
                "cov_y": it.cov_y.tolist(),
                "count": it.member_count,
            }
            for it in model.intended
        ],
        "thresholds": [
            {"side": side, "per_time": [_gaussian_to_json(g) for g in seq]}
            for side, seq in model.thresholds.items()
        ],
        "metadata": model.metadata,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_model(path) -> TrafficModel:
    """Load a model written by :func:`save_model`.

    Accepts any 1.x file; fields added after 1.0 (the metadata block) are
    defaulted when absent. Unknown major versions are refused.

    Raises:
        ModelSchemaError: unsupported major version.
        CorruptModelError: unreadable or structurally broken file.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptModelError(f"{path}: not valid JSON ({exc})") from exc

    try:
        version = str(payload["version"])
        major = int(version.split(".")[0])
        if major != int(SCHEMA_VERSION.split(".")[0]):
            raise ModelSchemaError(
                f"{path}: schema version {version} unsupported (expected major "
                f"{SCHEMA_VERSION.split('.')[0]})"
            )
        clusters = sorted(payload["clusters"], key=lambda c: int(c["k"]))
        n = len(clusters[0]["mean_x"])
        grid = TimeGrid(np.linspace(0.0, float(payload["horizon"]), n), float(payload["rate"]))
        intended = [
            IntendedTrajectory(
                int(c["k"]),
                np.asarray(c["mean_x"], dtype=float),
                np.asarray(c["mean_y"], dtype=float),
                np.asarray(c["cov_x"], dtype=float),
                np.asarray(c["cov_y"], dtype=float),
                int(c["count"]),
            )
            for c in clusters
        ]
        thresholds = {
            entry["side"]: [
                GaussianDist(np.asarray(g["mean"], dtype=float), np.asarray(g["cov"], dtype=float))
                for g in entry["per_time"]
            ]
            for entry in payload["thresholds"]
        }
        metadata = payload.get("metadata", {})
        return TrafficModel(grid, intended, thresholds, metadata)
    except ModelSchemaError:
        raise
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise CorruptModelError(f"{path}: malformed model file ({exc})") from exc
