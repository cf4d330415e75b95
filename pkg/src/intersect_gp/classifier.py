"""Online classification of a partially observed trajectory.

As detections stream in, the observed prefix is re-fit with the trajectory
reconstruction GP, so the comparison against the traffic model happens at
the model's own grid times even when frames are missing. For every newly
covered grid time the squared per-time Mahalanobis distances (x and y
terms, using the per-time marginal variances) are added into per-target
accumulators, one per cluster plus one per exclusion threshold, which keeps
the per-frame work constant.

The decision rule defaults to "straight": a turn is declared only when the
normalized distance to the straight cluster exceeds the distance to both
threshold sequences, at which point the nearest cluster wins.

Distances are normalized by sqrt(2 * covered_grid_times) so that values
are comparable across time; the raw accumulators grow without bound and
threshold crossings would otherwise be artifacts of trajectory length.

The full-covariance reading of the distance (inverting the model covariance
over all covered grid times at once) is available as :func:`batch_classify`;
it is exact at final information but not recursive, and the CLI exposes it
as the ``batch-replay`` mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gp import GPPosterior, WienerVelocityKernel, fit_posterior, optimize_hyperparameters
from .metrics import GaussianDist, mahalanobis
from .traffic_model import STRAIGHT, THRESHOLD_SIDES, TrafficModel

__all__ = [
    "VARIANCE_FLOOR",
    "Decision",
    "OnlineClassifier",
    "classification_time",
    "batch_classify",
    "target_names",
]

# keeps distance terms finite where a cluster has near-zero spread
# (e.g. the shared source lane at t=0)
VARIANCE_FLOOR = 1e-6

# fallback hyperparameters while the prefix is too short to optimize
_PREFIX_THETA = 10.0
_PREFIX_NOISE_VAR = 1e-2
_MIN_OPTIMIZE_OBS = 3


def target_names(k: int) -> list[str]:
    """Distance-target order: the k clusters, then the two thresholds."""
    return [f"cluster_{i}" for i in range(k)] + list(THRESHOLD_SIDES)


@dataclass(frozen=True)
class Decision:
    """Classifier output at one instant.

    ``distances`` holds the normalized distance per target (k clusters
    followed by the left/center and right/center thresholds); NaN before
    any grid time is covered. ``cluster`` equals the straight index
    whenever ``excluded_straight`` is False.
    """

    cluster: int
    distances: np.ndarray
    excluded_straight: bool


class _TargetBank:
    """Model means and floored marginal variances on the grid, per target."""

    def __init__(self, model: TrafficModel):
        rows_mx, rows_my, rows_vx, rows_vy = [], [], [], []
        for it in model.intended:
            rows_mx.append(it.mean_x)
            rows_my.append(it.mean_y)
            rows_vx.append(np.diag(it.cov_x))
            rows_vy.append(np.diag(it.cov_y))
        for side in THRESHOLD_SIDES:
            seq = model.thresholds[side]
            rows_mx.append(np.array([g.mean[0] for g in seq]))
            rows_my.append(np.array([g.mean[1] for g in seq]))
            rows_vx.append(np.array([g.cov[0, 0] for g in seq]))
            rows_vy.append(np.array([g.cov[1, 1] for g in seq]))
        self.mean_x = np.vstack(rows_mx)
        self.mean_y = np.vstack(rows_my)
        self.var_x = np.maximum(np.vstack(rows_vx), VARIANCE_FLOOR)
        self.var_y = np.maximum(np.vstack(rows_vy), VARIANCE_FLOOR)
        self.k = model.k
        self.n_targets = model.k + len(THRESHOLD_SIDES)


@dataclass
class OnlineClassifier:
    """Streaming per-vehicle state: observed prefix, accumulators, decisions.

    One instance tracks one vehicle. ``ingest`` mutates the state and must
    be externally serialized; ``classify`` is read-only. Timestamps are
    re-zeroed on the first sample so wall-clock detection times can be fed
    directly.
    """

    model: TrafficModel
    _bank: _TargetBank = field(init=False, repr=False)
    times: list[float] = field(default_factory=list)
    xs: list[float] = field(default_factory=list)
    ys: list[float] = field(default_factory=list)
    grid_cursor: int = 0
    cum_sq_dist: np.ndarray = field(init=False)
    decision_history: list[tuple[float, int]] = field(default_factory=list)
    gp_x: GPPosterior | None = None
    gp_y: GPPosterior | None = None
    _t0: float | None = None
    _last_raw: float = -math.inf

    def __post_init__(self):
        self._bank = _TargetBank(self.model)
        self.cum_sq_dist = np.zeros(self._bank.n_targets)

    def ingest(self, sample) -> "OnlineClassifier":
        """Fold one detection into the state.

        Refits the observation GP on the full prefix, covers every grid
        time up to the new timestamp, and freezes those distance terms into
        the accumulators (they are not revisited by later, better fits).

        Raises:
            ValueError: timestamp earlier than the last one seen.
        """
        if sample.timestamp < self._last_raw:
            raise ValueError(
                f"out-of-order timestamp {sample.timestamp} < {self._last_raw}"
            )
        self._last_raw = sample.timestamp
        if self._t0 is None:
            self._t0 = sample.timestamp
        t = sample.timestamp - self._t0
        self.times.append(t)
        self.xs.append(sample.position[0])
        self.ys.append(sample.position[1])
        self._refit()

        grid_times = self.model.grid.times
        new_cursor = int(np.searchsorted(grid_times, t, side="right"))
        if new_cursor > self.grid_cursor:
            idx = np.arange(self.grid_cursor, new_cursor)
            eval_times = grid_times[idx]
            mx = np.atleast_1d(self.gp_x.predict_mean(eval_times))
            my = np.atleast_1d(self.gp_y.predict_mean(eval_times))
            bank = self._bank
            self.cum_sq_dist += np.sum(
                (mx[None, :] - bank.mean_x[:, idx]) ** 2 / bank.var_x[:, idx]
                + (my[None, :] - bank.mean_y[:, idx]) ** 2 / bank.var_y[:, idx],
                axis=1,
            )
            self.grid_cursor = new_cursor

        decision = self.classify() if self.grid_cursor >= 1 else _default_decision(self._bank)
        self.decision_history.append((t, decision.cluster))
        return self

    def _refit(self):
        times = np.asarray(self.times)
        for attr, values in (("gp_x", self.xs), ("gp_y", self.ys)):
            values = np.asarray(values)
            if times.size >= _MIN_OPTIMIZE_OBS:
                kernel, noise_var = optimize_hyperparameters(times, values)
            else:
                kernel, noise_var = WienerVelocityKernel(_PREFIX_THETA), _PREFIX_NOISE_VAR
            setattr(self, attr, fit_posterior(times, values, kernel, noise_var))

    def classify(self) -> Decision:
        """Current decision from the accumulated distances.

        Requires at least one covered grid time. Touches only the K+2
        accumulator scalars, so it is cheap enough to call per frame.
        """
        if self.grid_cursor < 1:
            raise ValueError("no grid time covered yet; ingest more data first")
        dist = np.sqrt(self.cum_sq_dist / (2.0 * self.grid_cursor))
        k = self._bank.k
        excluded = bool(dist[STRAIGHT] > dist[k] and dist[STRAIGHT] > dist[k + 1])
        cluster = int(np.argmin(dist[:k])) if excluded else STRAIGHT
        return Decision(cluster, dist, excluded)


def _default_decision(bank: _TargetBank) -> Decision:
    return Decision(STRAIGHT, np.full(bank.n_targets, np.nan), False)


def _iter_samples(traj):
    # local import: trajectory_data imports nothing from here, no cycle risk
    from .trajectory_data import Sample

    for t, x, y in zip(traj.times, traj.xs, traj.ys):
        yield Sample(float(t), np.array([x, y]), traj.id)


def classification_time(traj, model: TrafficModel, truth: int) -> float:
    """Earliest held-correct decision time for a fully observed trajectory.

    Replays the trajectory through the streaming classifier and returns the
    first observation time from which every subsequent decision equals
    ``truth``. Returns ``math.inf`` when even the final decision is wrong.
    """
    state = OnlineClassifier(model)
    for sample in _iter_samples(traj):
        state.ingest(sample)
    history = state.decision_history
    if not history or history[-1][1] != truth:
        return math.inf
    onset = history[-1][0]
    for t, decided in reversed(history):
        if decided != truth:
            break
        onset = t
    return float(onset)


def batch_classify(traj, model: TrafficModel, upto_time: float | None = None) -> Decision:
    """Exact-mode decision from the final observation GP.

    Fits one GP per axis on all observations (optionally truncated to
    ``upto_time``, measured from the first sample), then computes the
    Mahalanobis distance over all covered grid times jointly, with the full
    model covariance for clusters (regularized by the variance floor on the
    diagonal) and the per-time variances for the thresholds. Per-axis
    distances are added and normalized by sqrt(2 * covered), mirroring the
    streaming scale so logs remain comparable.
    """
    times = np.asarray(traj.times, dtype=float)
    times = times - times[0]
    xs = np.asarray(traj.xs, dtype=float)
    ys = np.asarray(traj.ys, dtype=float)
    if upto_time is not None:
        mask = times <= upto_time
        times, xs, ys = times[mask], xs[mask], ys[mask]
    if times.size == 0:
        raise ValueError("no observations to classify")

    posteriors = []
    for values in (xs, ys):
        if times.size >= _MIN_OPTIMIZE_OBS:
            kernel, noise_var = optimize_hyperparameters(times, values)
        else:
            kernel, noise_var = WienerVelocityKernel(_PREFIX_THETA), _PREFIX_NOISE_VAR
        posteriors.append(fit_posterior(times, values, kernel, noise_var))
    gp_x, gp_y = posteriors

    grid_times = model.grid.times
    covered = int(np.searchsorted(grid_times, times[-1], side="right"))
    bank = _TargetBank(model)
    if covered == 0:
        return _default_decision(bank)

    eval_times = grid_times[:covered]
    obs = {
        "x": np.atleast_1d(gp_x.predict_mean(eval_times)),
        "y": np.atleast_1d(gp_y.predict_mean(eval_times)),
    }
    reg = VARIANCE_FLOOR * np.eye(covered)
    dist = np.zeros(bank.n_targets)
    for k, it in enumerate(model.intended):
        for axis, (mean, cov) in (
            ("x", (it.mean_x, it.cov_x)),
            ("y", (it.mean_y, it.cov_y)),
        ):
            target = GaussianDist(mean[:covered], cov[:covered, :covered] + reg)
            dist[k] += mahalanobis(obs[axis], target)
    for j, side in enumerate(THRESHOLD_SIDES):
        row = bank.k + j
        dist[row] += np.sqrt(
            np.sum((obs["x"] - bank.mean_x[row, :covered]) ** 2 / bank.var_x[row, :covered])
        )
        dist[row] += np.sqrt(
            np.sum((obs["y"] - bank.mean_y[row, :covered]) ** 2 / bank.var_y[row, :covered])
        )
    dist /= np.sqrt(2.0 * covered)

    k = bank.k
    excluded = bool(dist[STRAIGHT] > dist[k] and dist[STRAIGHT] > dist[k + 1])
    cluster = int(np.argmin(dist[:k])) if excluded else STRAIGHT
    return Decision(cluster, dist, excluded)
