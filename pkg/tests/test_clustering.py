import numpy as np
import pytest

from intersect_gp.clustering import (
    ClusterLabeling,
    DegenerateClusteringError,
    _seed_centers,
    canonicalize_labels,
    endpoint_features,
    kmeans_pp,
)


def _blobs(rng, centers, n_per=30, spread=0.1):
    pts, truth = [], []
    for i, c in enumerate(centers):
        pts.append(rng.normal(0, spread, (n_per, len(c))) + np.asarray(c))
        truth.extend([i] * n_per)
    return np.vstack(pts), np.array(truth)


class TestEndpointFeatures:
    def test_shape_and_values(self, small_pipeline):
        tset = small_pipeline["tset"]
        feats = endpoint_features(tset, 0.0, 3.0)
        assert feats.shape == (len(tset), 4)
        member = tset.members[0]
        np.testing.assert_allclose(feats[0, 0], member.gp_x.predict_mean(0.0))
        np.testing.assert_allclose(feats[0, 3], member.gp_y.predict_mean(3.0))

    def test_terminal_position_recorded(self, small_pipeline):
        tset = small_pipeline["tset"]
        feats = endpoint_features(tset)
        idx = int(np.argmax(feats[:, 2]))  # farthest right at the end
        member = tset.members[idx]
        assert feats[idx, 2] == pytest.approx(member.gp_x.predict_mean(3.0))

    def test_equal_times_rejected(self, small_pipeline):
        with pytest.raises(ValueError):
            endpoint_features(small_pipeline["tset"], 1.0, 1.0)


class TestKMeans:
    def test_single_cluster(self, rng):
        pts = rng.normal(0, 1, (20, 4))
        labeling = kmeans_pp(pts, 1, seed=0)
        assert np.all(labeling.labels == 0)
        np.testing.assert_allclose(labeling.centers[0], pts.mean(axis=0))

    def test_separated_blobs_match_oracle(self, rng):
        pts, truth = _blobs(rng, [(0, 0), (20, 0), (0, 20)])
        labeling = kmeans_pp(pts, 3, seed=0)
        # agreement up to permutation: each blob maps to exactly one label
        mapping = {}
        for blob in range(3):
            labels = labeling.labels[truth == blob]
            assert len(set(labels)) == 1
            mapping[blob] = labels[0]
        assert len(set(mapping.values())) == 3

    def test_k_equals_n_zero_wcss(self, rng):
        pts = rng.normal(0, 5, (6, 2))
        labeling = kmeans_pp(pts, 6, seed=3)
        wcss = np.sum((pts - labeling.centers[labeling.labels]) ** 2)
        assert wcss == pytest.approx(0.0, abs=1e-12)
        assert len(set(labeling.labels.tolist())) == 6

    def test_more_clusters_than_points(self, rng):
        with pytest.raises(ValueError):
            kmeans_pp(rng.normal(0, 1, (3, 2)), 4, seed=0)

    def test_deterministic_given_seed(self, rng):
        pts = rng.normal(0, 1, (50, 4))
        a = kmeans_pp(pts, 3, seed=11)
        b = kmeans_pp(pts, 3, seed=11)
        np.testing.assert_array_equal(a.labels, b.labels)
        np.testing.assert_array_equal(a.centers, b.centers)

    def test_wcss_non_increasing_over_lloyd_iterations(self, rng):
        pts = rng.normal(0, 1, (120, 3))
        centers = _seed_centers(pts, 4, np.random.default_rng(5))
        prev = np.inf
        for _ in range(30):
            d2 = np.sum((pts[:, None, :] - centers[None, :, :]) ** 2, axis=2)
            labels = np.argmin(d2, axis=1)
            wcss = float(np.sum((pts - centers[labels]) ** 2))
            assert wcss <= prev + 1e-9
            prev = wcss
            for c in range(4):
                if np.any(labels == c):
                    centers[c] = pts[labels == c].mean(axis=0)

    def test_degenerate_input_raises(self):
        pts = np.zeros((4, 2))  # all identical: a second cluster can never fill
        with pytest.raises(DegenerateClusteringError):
            kmeans_pp(pts, 2, seed=0)

    def test_labeling_validation(self):
        with pytest.raises(ValueError, match="nonempty"):
            ClusterLabeling(np.array([0, 0]), np.zeros((2, 2)), 2)


class TestCanonicalize:
    def _labeling(self, feats, labels, k):
        centers = np.vstack([feats[labels == c].mean(axis=0) for c in range(k)])
        return ClusterLabeling(labels, centers, k)

    def test_right_left_straight_ordering(self, rng):
        # all start near the origin heading +y; terminals fan right/left/ahead
        feats, truth = [], []
        for i, terminal in enumerate([(8.0, 6.0), (-8.0, 6.0), (0.0, 10.0)]):
            for _ in range(10):
                start = rng.normal(0, 0.1, 2)
                feats.append([start[0], start[1], terminal[0] + rng.normal(0, 0.2), terminal[1]])
                truth.append(i)
        feats, truth = np.asarray(feats), np.asarray(truth)
        out = canonicalize_labels(self._labeling(feats, truth, 3), feats)
        assert np.all(out.labels[truth == 0] == 0)  # fans right
        assert np.all(out.labels[truth == 1] == 1)  # fans left
        assert np.all(out.labels[truth == 2] == 2)  # straight ahead

    def test_permutation_invariance(self, rng):
        feats, truth = _blobs(rng, [(5, -5, 10, 0), (0, 0, -10, 8), (1, 1, 0, 12)], n_per=8)
        perm = np.array([2, 0, 1])
        out1 = canonicalize_labels(self._labeling(feats, truth, 3), feats)
        out2 = canonicalize_labels(self._labeling(feats, perm[truth], 3), feats)
        np.testing.assert_array_equal(out1.labels, out2.labels)

    def test_single_cluster_unchanged(self, rng):
        feats = rng.normal(0, 1, (10, 4))
        labeling = self._labeling(feats, np.zeros(10, dtype=int), 1)
        assert canonicalize_labels(labeling, feats) is labeling

    def test_pipeline_labels_match_truth(self, small_pipeline):
        labeling = small_pipeline["labeling"]
        truth = small_pipeline["truth"]
        ids = small_pipeline["tset"].ids
        truth_arr = np.array([truth[tid] for tid in ids])
        assert np.array_equal(labeling.labels, truth_arr)
