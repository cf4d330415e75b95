"""Distances and barycenters on multivariate Gaussian distributions.

The classifier compares an observed trajectory against per-time Gaussian
marginals with the Mahalanobis distance, and the exclusion thresholds are
built as Wasserstein barycenters between pairs of those marginals. For
Gaussians the 2-Wasserstein distance has the closed (Bures) form

    D_W(f1, f2)^2 = ||m1 - m2||^2 + Tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2)

and the barycenter covariance is the limit of a matrix fixed-point
iteration. Everything here works on small dimensions (d = 1..3 in this
package), via symmetric eigendecompositions with eigenvalue clamping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

__all__ = [
    "GaussianDist",
    "SingularCovarianceError",
    "BarycenterConvergenceError",
    "wasserstein",
    "mahalanobis",
    "wasserstein_barycenter",
]

_SYMMETRY_TOL = 1e-10
_EIGENVALUE_TOL = -1e-10


class SingularCovarianceError(np.linalg.LinAlgError):
    """Covariance is singular even after the regularizing jitter."""


class BarycenterConvergenceError(RuntimeError):
    """Fixed-point iteration did not reach tolerance within the cap."""

    def __init__(self, residual: float, max_iter: int):
        self.residual = residual
        super().__init__(
            f"barycenter fixed point not converged after {max_iter} iterations "
            f"(last Frobenius change {residual:.3e})"
        )


@dataclass(frozen=True)
class GaussianDist:
    """A multivariate Gaussian given by mean vector and PSD covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        d = mean.size
        if cov.shape != (d, d):
            raise ValueError(f"covariance shape {cov.shape} does not match mean size {d}")
        if np.max(np.abs(cov - cov.T), initial=0.0) > _SYMMETRY_TOL:
            raise ValueError("covariance is not symmetric")
        if np.min(np.linalg.eigvalsh(cov)) < _EIGENVALUE_TOL:
            raise ValueError("covariance has an eigenvalue below -1e-10")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    """Principal square root of a symmetric PSD matrix, eigenvalues clamped."""
    lam, q = np.linalg.eigh(mat)
    lam = np.maximum(lam, 0.0)
    return (q * np.sqrt(lam)) @ q.T


def _invsqrtm_psd(mat: np.ndarray) -> np.ndarray:
    """Pseudo-inverse square root: zero eigenvalues stay zero."""
    lam, q = np.linalg.eigh(mat)
    lam = np.maximum(lam, 0.0)
    inv = np.where(lam > lam.max(initial=0.0) * 1e-14, 1.0 / np.sqrt(np.where(lam > 0, lam, 1.0)), 0.0)
    return (q * inv) @ q.T


def wasserstein(f1: GaussianDist, f2: GaussianDist) -> float:
    """2-Wasserstein distance between Gaussians (Bures form).

    Symmetric and non-negative; the trace term is clamped at zero against
    round-off. Raises ``ValueError`` on dimension mismatch.
    """
    if f1.dim != f2.dim:
        raise ValueError(f"dimension mismatch: {f1.dim} vs {f2.dim}")
    s1_half = _sqrtm_psd(f1.cov)
    cross = _sqrtm_psd(s1_half @ f2.cov @ s1_half)
    mean_term = float(np.sum((f1.mean - f2.mean) ** 2))
    trace_term = float(np.trace(f1.cov) + np.trace(f2.cov) - 2.0 * np.trace(cross))
    # round-off in the eigendecompositions leaves the trace term at
    # ~1e-15 * scale for (near-)identical covariances; the square root would
    # amplify that noise into a spurious distance, so clamp below a
    # scale-relative floor
    floor = 1e-12 * (abs(np.trace(f1.cov)) + abs(np.trace(f2.cov)))
    if trace_term < floor:
        trace_term = 0.0
    return float(np.sqrt(mean_term + trace_term))


def mahalanobis(x, f: GaussianDist) -> float:
    """Mahalanobis distance of a point from a Gaussian.

    The covariance must be positive definite; if factorization fails, a
    jitter of ``1e-9 * trace(S)/d`` is added once before giving up with
    ``SingularCovarianceError``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != f.dim:
        raise ValueError(f"point dimension {x.size} does not match Gaussian dimension {f.dim}")
    resid = x - f.mean
    cov = f.cov
    for attempt in range(2):
        try:
            factor = cho_factor(cov, lower=True)
        except np.linalg.LinAlgError:
            if attempt == 1:
                raise SingularCovarianceError(
                    "covariance singular beyond jitter 1e-9*trace/d"
                ) from None
            cov = f.cov + (1e-9 * np.trace(f.cov) / f.dim) * np.eye(f.dim)
            continue
        q = float(resid @ cho_solve(factor, resid))
        return float(np.sqrt(max(q, 0.0)))
    raise AssertionError("unreachable")


def wasserstein_barycenter(
    dists: list[GaussianDist],
    weights=None,
    tol: float = 1e-9,
    max_iter: int = 200,
) -> GaussianDist:
    """Weighted Wasserstein barycenter of Gaussians.

    The barycenter mean is the weighted average of means. The covariance is
    the limit of the fixed-point iteration

        S <- S^-1/2 (sum_i w_i (S^1/2 S_i S^1/2)^1/2)^2 S^-1/2

    started at the weighted average of the input covariances and stopped
    when the Frobenius change drops below ``tol``.

    Args:
        dists: one or more Gaussians of equal dimension.
        weights: non-negative, normalized on entry; uniform when omitted.
        tol: Frobenius-change stopping tolerance.
        max_iter: iteration cap.

    Raises:
        BarycenterConvergenceError: not converged within ``max_iter``;
            carries the last residual.
    """
    if not dists:
        raise ValueError("need at least one distribution")
    d = dists[0].dim
    if any(f.dim != d for f in dists):
        raise ValueError("all distributions must share one dimension")
    if weights is None:
        weights = np.full(len(dists), 1.0 / len(dists))
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.size != len(dists) or np.any(weights < 0):
            raise ValueError("weights must be non-negative, one per distribution")
        total = weights.sum()
        if total <= 0:
            raise ValueError("weights must not all be zero")
        weights = weights / total

    mean = sum(w * f.mean for w, f in zip(weights, dists))
    covs = np.stack([f.cov for f in dists])

    cov = np.einsum("i,ijk->jk", weights, covs)
    for _ in range(max_iter):
        root = _sqrtm_psd(cov)
        inv_root = _invsqrtm_psd(cov)
        inner = sum(w * _sqrtm_psd(root @ s @ root) for w, s in zip(weights, covs))
        new_cov = inv_root @ inner @ inner @ inv_root
        new_cov = 0.5 * (new_cov + new_cov.T)
        residual = float(np.linalg.norm(new_cov - cov))
        cov = new_cov
        if residual <= tol:
            return GaussianDist(mean, cov)
    raise BarycenterConvergenceError(residual, max_iter)
