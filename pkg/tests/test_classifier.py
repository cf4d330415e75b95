import math

import numpy as np
import pytest

from intersect_gp.classifier import (
    VARIANCE_FLOOR,
    OnlineClassifier,
    batch_classify,
    classification_time,
    target_names,
)
from intersect_gp.clustering import ClusterLabeling
from intersect_gp.gp import (
    ReconstructedTrajectory,
    TrajectorySet,
    WienerVelocityKernel,
    fit_posterior,
    optimize_hyperparameters,
)
from intersect_gp.metrics import GaussianDist, mahalanobis
from intersect_gp.traffic_model import LEFT, RIGHT, STRAIGHT, TimeGrid, build_model
from intersect_gp.trajectory_data import RawTrajectory, Sample


def _sample(t, x, y, tid=0):
    return Sample(float(t), np.array([float(x), float(y)]), tid)


def _toy_model(grid_times):
    """Three separated straight-line behaviors, two members each.

    Members are offset in both axes so every per-time variance sits well
    above the classifier's floor.
    """
    k = WienerVelocityKernel(1.0)
    t = np.asarray(grid_times)
    members, labels = [], []
    paths = {
        RIGHT: lambda off: (3.0 * t + off, 1.0 * t + off),
        LEFT: lambda off: (-3.0 * t + off, 1.0 * t + off),
        STRAIGHT: lambda off: (np.zeros_like(t) + off, 3.0 * t + off),
    }
    tid = 0
    for cluster, path in paths.items():
        for off in (-0.1, 0.1):
            xs, ys = path(off)
            members.append(
                ReconstructedTrajectory(tid, fit_posterior(t, xs, k, 0.0), fit_posterior(t, ys, k, 0.0))
            )
            labels.append(cluster)
            tid += 1
    tset = TrajectorySet(members)
    labeling = ClusterLabeling(np.array(labels), np.zeros((3, 4)), 3)
    return build_model(tset, labeling, TimeGrid(np.asarray(grid_times), rate=20.0))


@pytest.fixture(scope="module")
def toy_model():
    return _toy_model(np.linspace(0.5, 2.5, 5))


class TestIngest:
    def test_sample_before_first_grid_time(self, toy_model):
        clf = OnlineClassifier(toy_model)
        clf.ingest(_sample(0.4, 0.0, 1.2))
        assert clf.grid_cursor == 0
        assert np.all(clf.cum_sq_dist == 0.0)
        assert clf.times == [0.0]  # stored, clock re-zeroed on first sample
        assert clf.decision_history == [(0.0, STRAIGHT)]

    def test_gap_covers_two_grid_times_at_once(self, toy_model):
        clf = OnlineClassifier(toy_model)
        clf.ingest(_sample(0.0, 0.0, 0.0))
        assert clf.grid_cursor == 0
        clf.ingest(_sample(1.1, 0.0, 3.3))
        assert clf.grid_cursor == 2  # grid times 0.5 and 1.0 in one step

    def test_out_of_order_rejected(self, toy_model):
        clf = OnlineClassifier(toy_model)
        clf.ingest(_sample(1.0, 0.0, 0.0))
        with pytest.raises(ValueError, match="out-of-order"):
            clf.ingest(_sample(0.5, 0.0, 0.0))

    def test_accumulators_monotone(self, toy_model, rng):
        clf = OnlineClassifier(toy_model)
        prev = clf.cum_sq_dist.copy()
        for i, t in enumerate(np.arange(0.0, 3.0, 0.25)):
            clf.ingest(_sample(t, rng.normal(0, 1), 3 * t + rng.normal(0, 1)))
            assert np.all(clf.cum_sq_dist >= prev - 1e-12)
            prev = clf.cum_sq_dist.copy()

    def test_straight_observation_accumulates_least_for_straight(self, toy_model):
        # the straight mean itself: residual is reconstruction error only
        clf = OnlineClassifier(toy_model)
        for t in np.arange(0.0, 2.6, 0.25):
            clf.ingest(_sample(t, 0.0, 3.0 * t))
        assert clf.cum_sq_dist[STRAIGHT] < 0.05 * clf.cum_sq_dist[RIGHT]
        assert clf.cum_sq_dist[STRAIGHT] < 0.05 * clf.cum_sq_dist[LEFT]
        decision = clf.classify()
        assert decision.cluster == STRAIGHT


class TestClassify:
    def test_requires_covered_grid_time(self, toy_model):
        with pytest.raises(ValueError, match="grid time"):
            OnlineClassifier(toy_model).classify()

    def test_tied_distances_default_to_straight(self, toy_model):
        clf = OnlineClassifier(toy_model)
        clf.ingest(_sample(0.0, 1.0, 1.0))
        clf.ingest(_sample(0.6, 1.0, 1.0))
        clf.cum_sq_dist[:] = 4.0  # strict inequality fails on the tie
        decision = clf.classify()
        assert decision.cluster == STRAIGHT
        assert not decision.excluded_straight

    def test_straight_decision_iff_not_excluded(self, toy_model, rng):
        clf = OnlineClassifier(toy_model)
        for t in np.arange(0.0, 3.0, 0.1):
            clf.ingest(_sample(t, rng.normal(0, 0.5), 2 * t))
            if clf.grid_cursor >= 1:
                decision = clf.classify()
                if not decision.excluded_straight:
                    assert decision.cluster == STRAIGHT

    def test_normalization_uses_covered_count(self, toy_model):
        clf = OnlineClassifier(toy_model)
        clf.ingest(_sample(0.0, 0.05, 0.1))
        clf.ingest(_sample(0.6, 0.05, 1.7))
        decision = clf.classify()
        expected = np.sqrt(clf.cum_sq_dist / (2.0 * clf.grid_cursor))
        np.testing.assert_allclose(decision.distances, expected)

    def test_decision_sequence_deterministic(self, toy_model, rng):
        obs = [(t, rng.normal(0, 0.3), 3 * t + rng.normal(0, 0.3)) for t in np.arange(0, 3, 0.05)]
        seqs = []
        for _ in range(2):
            clf = OnlineClassifier(toy_model)
            for t, x, y in obs:
                clf.ingest(_sample(t, x, y))
            seqs.append(list(clf.decision_history))
        assert seqs[0] == seqs[1]


class TestExclusionDynamics:
    def _mean_curve(self, model, cluster):
        grid = model.grid.times
        it = model.intended[cluster]
        tt = np.arange(61) / 20.0
        return RawTrajectory(
            900 + cluster,
            tt,
            np.interp(tt, grid, it.mean_x),
            np.interp(tt, grid, it.mean_y),
        )

    def _divergence_time(self, model, cluster):
        it, st = model.intended[cluster], model.intended[STRAIGHT]
        dev = np.hypot(it.mean_x - st.mean_x, it.mean_y - st.mean_y)
        spread = np.sqrt(
            np.maximum(np.diag(st.cov_x), 0) + np.maximum(np.diag(st.cov_y), 0)
        )
        idx = np.flatnonzero(dev > 2 * spread)
        return model.grid.times[idx[0]]

    def test_turn_means_excluded_soon_after_divergence(self, small_pipeline):
        model = small_pipeline["model"]
        step = model.grid.times[1] - model.grid.times[0]
        for cluster in (RIGHT, LEFT):
            traj = self._mean_curve(model, cluster)
            clf = OnlineClassifier(model)
            excluded_at = []
            for t, x, y in zip(traj.times, traj.xs, traj.ys):
                clf.ingest(_sample(t, x, y, traj.id))
                if clf.grid_cursor >= 1:
                    excluded_at.append((t, clf.classify().excluded_straight))
            # persistent exclusion: once on, stays on through the end
            onset = None
            for i in range(len(excluded_at)):
                if all(flag for _, flag in excluded_at[i:]):
                    onset = excluded_at[i][0]
                    break
            assert onset is not None
            assert onset <= self._divergence_time(model, cluster) + 3 * step + 1e-9
            assert clf.classify().cluster == cluster

    def test_straight_mean_finishes_unexcluded(self, small_pipeline):
        model = small_pipeline["model"]
        traj = self._mean_curve(model, STRAIGHT)
        clf = OnlineClassifier(model)
        for t, x, y in zip(traj.times, traj.xs, traj.ys):
            clf.ingest(_sample(t, x, y, traj.id))
        decision = clf.classify()
        assert decision.cluster == STRAIGHT
        assert not decision.excluded_straight


class TestClassificationTime:
    def test_straight_mean_classified_quickly(self, small_pipeline):
        model = small_pipeline["model"]
        grid = model.grid.times
        it = model.intended[STRAIGHT]
        tt = np.arange(61) / 20.0
        traj = RawTrajectory(901, tt, np.interp(tt, grid, it.mean_x), np.interp(tt, grid, it.mean_y))
        ct = classification_time(traj, model, STRAIGHT)
        assert math.isfinite(ct) and ct <= 1.0

    def test_left_exemplar_within_one_second(self, small_pipeline):
        model = small_pipeline["model"]
        grid = model.grid.times
        it = model.intended[LEFT]
        tt = np.arange(61) / 20.0
        traj = RawTrajectory(902, tt, np.interp(tt, grid, it.mean_x), np.interp(tt, grid, it.mean_y))
        ct = classification_time(traj, model, LEFT)
        assert math.isfinite(ct) and ct <= 1.0

    def test_wrong_truth_never_converges(self, small_pipeline, heldout_small):
        trajs, truth = heldout_small
        model = small_pipeline["model"]
        idx = truth.index(LEFT)
        assert classification_time(trajs[idx], model, RIGHT) == math.inf

    def test_heldout_sample_converges(self, small_pipeline, heldout_small):
        trajs, truth = heldout_small
        model = small_pipeline["model"]
        for traj, label in list(zip(trajs, truth))[:8]:
            assert math.isfinite(classification_time(traj, model, label))


class TestStreamingBatchConsistency:
    def test_equal_information_matches_recomputation(self, rng):
        # every grid time is covered by the final ingest, so the streaming
        # accumulators must equal a one-shot recomputation from the final GP
        model = _toy_model(np.linspace(1.6, 2.9, 8))
        times = np.array([0.0, 0.5, 1.0, 1.5, 3.0])
        xs = rng.normal(0, 0.2, times.size)
        ys = 3 * times + rng.normal(0, 0.2, times.size)

        clf = OnlineClassifier(model)
        for t, x, y in zip(times, xs, ys):
            clf.ingest(_sample(t, x, y))
        assert clf.grid_cursor == model.grid.n

        mx = clf.gp_x.predict_mean(model.grid.times)
        my = clf.gp_y.predict_mean(model.grid.times)
        expected = np.zeros_like(clf.cum_sq_dist)
        for row, (mean_x, mean_y, var_x, var_y) in enumerate(_target_rows(model)):
            expected[row] = np.sum(
                (mx - mean_x) ** 2 / var_x + (my - mean_y) ** 2 / var_y
            )
        np.testing.assert_allclose(clf.cum_sq_dist, expected, atol=1e-8)

    def test_batch_matches_from_scratch(self, small_pipeline, heldout_small):
        model = small_pipeline["model"]
        trajs, _ = heldout_small
        for traj in trajs[:5]:
            got = batch_classify(traj, model)
            expected = _from_scratch_batch(traj, model)
            np.testing.assert_allclose(got.distances, expected, atol=1e-8)

    def test_target_names_order(self, toy_model):
        assert target_names(3) == ["cluster_0", "cluster_1", "cluster_2", "left_center", "right_center"]


def _target_rows(model):
    """Per-target (mean_x, mean_y, floored var_x, floored var_y) on the grid."""
    rows = []
    for it in model.intended:
        rows.append(
            (
                it.mean_x,
                it.mean_y,
                np.maximum(np.diag(it.cov_x), VARIANCE_FLOOR),
                np.maximum(np.diag(it.cov_y), VARIANCE_FLOOR),
            )
        )
    for side in ("left_center", "right_center"):
        seq = model.thresholds[side]
        rows.append(
            (
                np.array([g.mean[0] for g in seq]),
                np.array([g.mean[1] for g in seq]),
                np.maximum(np.array([g.cov[0, 0] for g in seq]), VARIANCE_FLOOR),
                np.maximum(np.array([g.cov[1, 1] for g in seq]), VARIANCE_FLOOR),
            )
        )
    return rows


def _from_scratch_batch(traj, model):
    """Independent assembly of the exact-mode distances (test oracle)."""
    times = np.asarray(traj.times) - traj.times[0]
    fits = []
    for values in (traj.xs, traj.ys):
        kernel, noise = optimize_hyperparameters(times, values)
        fits.append(fit_posterior(times, values, kernel, noise))
    covered = int(np.searchsorted(model.grid.times, times[-1], side="right"))
    eval_times = model.grid.times[:covered]
    mu = [np.atleast_1d(f.predict_mean(eval_times)) for f in fits]

    dist = np.zeros(model.k + 2)
    reg = VARIANCE_FLOOR * np.eye(covered)
    for k, it in enumerate(model.intended):
        for axis, (mean, cov) in enumerate(((it.mean_x, it.cov_x), (it.mean_y, it.cov_y))):
            dist[k] += mahalanobis(mu[axis], GaussianDist(mean[:covered], cov[:covered, :covered] + reg))
    for j, side in enumerate(("left_center", "right_center")):
        seq = model.thresholds[side][:covered]
        for axis, pick in enumerate((0, 1)):
            mean = np.array([g.mean[pick] for g in seq])
            var = np.maximum(np.array([g.cov[pick, pick] for g in seq]), VARIANCE_FLOOR)
            dist[model.k + j] += np.sqrt(np.sum((mu[axis] - mean) ** 2 / var))
    return dist / np.sqrt(2.0 * covered)
