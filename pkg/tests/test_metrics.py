import numpy as np
import pytest

from intersect_gp.metrics import (
    BarycenterConvergenceError,
    GaussianDist,
    SingularCovarianceError,
    _invsqrtm_psd,
    _sqrtm_psd,
    mahalanobis,
    wasserstein,
    wasserstein_barycenter,
)


def _random_gaussian(rng, d):
    a = rng.normal(0, 1, (d, d))
    return GaussianDist(rng.normal(0, 3, d), a @ a.T + 0.05 * np.eye(d))


class TestGaussianDist:
    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            GaussianDist([0.0, 0.0], [[1.0, 0.5], [0.2, 1.0]])

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError, match="eigenvalue"):
            GaussianDist([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            GaussianDist([0.0, 0.0], np.eye(3))


class TestWasserstein:
    def test_identical_inputs_zero(self, rng):
        f = _random_gaussian(rng, 3)
        assert wasserstein(f, f) == pytest.approx(0.0, abs=1e-8)

    def test_equal_covariances_reduce_to_euclidean(self):
        f1 = GaussianDist([0.0, 0.0], np.eye(2))
        f2 = GaussianDist([3.0, 4.0], np.eye(2))
        assert wasserstein(f1, f2) == pytest.approx(5.0)

    def test_1d_closed_form(self, rng):
        for _ in range(300):
            m1, m2 = rng.normal(0, 5, 2)
            s1, s2 = rng.uniform(0.01, 4, 2)
            got = wasserstein(GaussianDist([m1], [[s1**2]]), GaussianDist([m2], [[s2**2]]))
            assert got == pytest.approx(np.hypot(m1 - m2, s1 - s2), abs=1e-10)

    def test_symmetry(self, rng):
        for d in (1, 2, 3):
            f1, f2 = _random_gaussian(rng, d), _random_gaussian(rng, d)
            assert wasserstein(f1, f2) == pytest.approx(wasserstein(f2, f1), abs=1e-8)

    def test_triangle_inequality(self, rng):
        for _ in range(100):
            d = int(rng.integers(1, 4))
            f1, f2, f3 = (_random_gaussian(rng, d) for _ in range(3))
            assert wasserstein(f1, f3) <= wasserstein(f1, f2) + wasserstein(f2, f3) + 1e-8

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            wasserstein(GaussianDist([0.0], [[1.0]]), GaussianDist([0.0, 0.0], np.eye(2)))


class TestMahalanobis:
    def test_zero_at_mean(self, rng):
        f = _random_gaussian(rng, 2)
        assert mahalanobis(f.mean, f) == 0.0

    def test_identity_covariance_is_euclidean(self):
        f = GaussianDist([0.0, 0.0], np.eye(2))
        assert mahalanobis([3.0, 4.0], f) == pytest.approx(5.0)

    def test_diagonal_hand_value(self):
        f = GaussianDist([0.0, 0.0], np.diag([4.0, 1.0]))
        assert mahalanobis([2.0, 0.0], f) == pytest.approx(1.0)

    def test_affine_invariance(self, rng):
        for _ in range(30):
            d = int(rng.integers(1, 4))
            f = _random_gaussian(rng, d)
            x = rng.normal(0, 2, d)
            a = rng.normal(0, 1, (d, d)) + 2 * np.eye(d)
            b = rng.normal(0, 1, d)
            g = GaussianDist(a @ f.mean + b, a @ f.cov @ a.T)
            assert mahalanobis(a @ x + b, g) == pytest.approx(mahalanobis(x, f), abs=1e-6)

    def test_singular_beyond_jitter(self):
        f = GaussianDist([0.0, 0.0], np.zeros((2, 2)))
        with pytest.raises(SingularCovarianceError):
            mahalanobis([1.0, 0.0], f)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            mahalanobis([1.0], GaussianDist([0.0, 0.0], np.eye(2)))


class TestBarycenter:
    def test_identical_inputs_fixed_point(self, rng):
        f = _random_gaussian(rng, 2)
        b = wasserstein_barycenter([f, f, f])
        np.testing.assert_allclose(b.mean, f.mean, atol=1e-9)
        np.testing.assert_allclose(b.cov, f.cov, atol=1e-9)

    def test_weights_one_zero_identity(self, rng):
        f1, f2 = _random_gaussian(rng, 2), _random_gaussian(rng, 2)
        b = wasserstein_barycenter([f1, f2], [1.0, 0.0])
        np.testing.assert_allclose(b.mean, f1.mean, atol=1e-8)
        np.testing.assert_allclose(b.cov, f1.cov, atol=1e-8)

    def test_1d_equal_weights_closed_form(self):
        b = wasserstein_barycenter([GaussianDist([0.0], [[4.0]]), GaussianDist([0.0], [[9.0]])])
        assert b.cov[0, 0] == pytest.approx(((2.0 + 3.0) / 2) ** 2, abs=1e-9)

    def test_commuting_closed_form(self, rng):
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        e1, e2 = rng.uniform(0.1, 4, 3), rng.uniform(0.1, 4, 3)
        s1 = q @ np.diag(e1) @ q.T
        s2 = q @ np.diag(e2) @ q.T
        b = wasserstein_barycenter(
            [GaussianDist(np.zeros(3), s1), GaussianDist(np.zeros(3), s2)]
        )
        half_sum = 0.5 * (q @ np.diag(np.sqrt(e1)) @ q.T + q @ np.diag(np.sqrt(e2)) @ q.T)
        np.testing.assert_allclose(b.cov, half_sum @ half_sum, atol=1e-7)

    def test_mean_is_weighted_average(self, rng):
        fs = [_random_gaussian(rng, 2) for _ in range(3)]
        w = np.array([0.5, 0.3, 0.2])
        b = wasserstein_barycenter(fs, w)
        np.testing.assert_allclose(b.mean, sum(wi * f.mean for wi, f in zip(w, fs)), atol=1e-12)

    def test_fixed_point_residual(self, rng):
        fs = [_random_gaussian(rng, 2) for _ in range(4)]
        b = wasserstein_barycenter(fs)
        root, inv_root = _sqrtm_psd(b.cov), _invsqrtm_psd(b.cov)
        inner = sum(0.25 * _sqrtm_psd(root @ f.cov @ root) for f in fs)
        np.testing.assert_allclose(inv_root @ inner @ inner @ inv_root, b.cov, atol=1e-7)

    def test_equidistance_of_midpoint(self, rng):
        for _ in range(20):
            f1, f2 = _random_gaussian(rng, 2), _random_gaussian(rng, 2)
            b = wasserstein_barycenter([f1, f2])
            assert wasserstein(b, f1) == pytest.approx(wasserstein(b, f2), abs=1e-6)

    def test_weight_normalization(self, rng):
        f1, f2 = _random_gaussian(rng, 2), _random_gaussian(rng, 2)
        b1 = wasserstein_barycenter([f1, f2], [2.0, 2.0])
        b2 = wasserstein_barycenter([f1, f2], [0.5, 0.5])
        np.testing.assert_allclose(b1.cov, b2.cov, atol=1e-9)

    def test_zero_covariance_inputs(self):
        z = GaussianDist([1.0, 2.0], np.zeros((2, 2)))
        b = wasserstein_barycenter([z, z])
        np.testing.assert_allclose(b.cov, 0.0)
        np.testing.assert_allclose(b.mean, [1.0, 2.0])

    def test_non_convergence_reports_residual(self, rng):
        f1, f2 = _random_gaussian(rng, 2), _random_gaussian(rng, 2)
        with pytest.raises(BarycenterConvergenceError) as excinfo:
            wasserstein_barycenter([f1, f2], tol=0.0, max_iter=3)
        assert excinfo.value.residual >= 0.0

    def test_empty_and_bad_weights(self, rng):
        with pytest.raises(ValueError):
            wasserstein_barycenter([])
        f = _random_gaussian(rng, 2)
        with pytest.raises(ValueError):
            wasserstein_barycenter([f], [-1.0])
