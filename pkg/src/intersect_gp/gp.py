"""Gaussian process regression on a Wiener velocity kernel.

Each trajectory dimension is modeled as a zero-mean GP observed with i.i.d.
noise. The Wiener velocity covariance

    K(t, s) = theta * (min(t,s)^3 / 3 + |t - s| * min(t,s)^2 / 2)

is non-stationary, produces paths that are not overly smooth, and its
posterior mean continues linearly past the last observation, which is what
lets short trajectories be extrapolated to the full horizon.

Posteriors are fit by Cholesky factorization of the noisy Gram matrix;
hyperparameters (theta, noise variance) maximize the log marginal
likelihood over a deterministic log-space grid with local refinement.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

__all__ = [
    "WienerVelocityKernel",
    "GPPosterior",
    "ReconstructedTrajectory",
    "TrajectorySet",
    "IllConditionedKernelError",
    "GPNumericsError",
    "HyperparameterSearchError",
    "ReconstructionError",
    "fit_posterior",
    "optimize_hyperparameters",
    "reconstruct",
    "build_trajectory_set",
]

# jitter ladder tried when factorizing K(T,T) + noise*I; zero first so
# well-posed problems stay exact, then escalating up to the 1e-4 cap
_JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)

_VARIANCE_CLAMP = -1e-10

THETA_BOUNDS_LOG10 = (-3.0, 3.0)
NOISE_BOUNDS_LOG10 = (-6.0, 0.0)
GRID_POINTS = 16
REFINEMENT_HALVINGS = 3


class IllConditionedKernelError(np.linalg.LinAlgError):
    """Gram matrix could not be factorized even at the maximum jitter."""


class GPNumericsError(RuntimeError):
    """A posterior quantity fell outside its numerically tolerable range."""


class HyperparameterSearchError(RuntimeError):
    """No grid point produced a finite log marginal likelihood."""


class ReconstructionError(RuntimeError):
    """One or more trajectories failed to reconstruct."""

    def __init__(self, failures: dict[int, Exception]):
        self.failed_ids = sorted(failures)
        details = "; ".join(f"{tid}: {err}" for tid, err in sorted(failures.items()))
        super().__init__(f"reconstruction failed for trajectories {self.failed_ids} ({details})")


@dataclass(frozen=True)
class WienerVelocityKernel:
    """Wiener velocity covariance with length-scale hyperparameter ``theta``."""

    theta: float = 1.0

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"theta must be positive, got {self.theta}")

    def __call__(self, t, s):
        """Evaluate K(t, s); arguments broadcast, times must be >= 0."""
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        if np.any(t < 0) or np.any(s < 0):
            raise ValueError("kernel is defined for non-negative times only")
        m = np.minimum(t, s)
        return self.theta * (m**3 / 3.0 + 0.5 * np.abs(t - s) * m**2)

    def gram(self, times) -> np.ndarray:
        """Gram matrix K(T, T) for a vector of non-negative times."""
        times = np.asarray(times, dtype=float)
        return self(times[:, None], times[None, :])


@dataclass
class GPPosterior:
    """Posterior of a scalar GP given noisy observations.

    Holds the training data together with the cached Cholesky factor of
    ``K(T,T) + noise_variance*I + jitter*I`` and the solved weights
    ``(K(T,T) + noise)^-1 Z``, so predictions are matrix-vector products.
    Instances are immutable in practice and safe to share across threads.
    """

    kernel: WienerVelocityKernel
    train_times: np.ndarray
    train_values: np.ndarray
    noise_variance: float
    solved_weights: np.ndarray = field(repr=False)
    cholesky_factor: np.ndarray | None = field(repr=False)
    jitter: float = 0.0

    @classmethod
    def prior(cls, kernel: WienerVelocityKernel) -> "GPPosterior":
        """The data-free posterior: zero mean, prior variance everywhere."""
        empty = np.empty(0)
        return cls(kernel, empty, empty, 0.0, empty, None)

    @property
    def n_observations(self) -> int:
        return self.train_times.size

    def predict_mean(self, t):
        """Posterior mean at scalar or vector ``t``.

        Beyond the last training time the mean is an affine function of t,
        a property of the Wiener velocity kernel used for extrapolation.
        """
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        if self.n_observations == 0:
            out = np.zeros(t_arr.shape)
        else:
            k_vec = self.kernel(self.train_times[:, None], t_arr[None, :])
            out = k_vec.T @ self.solved_weights
        return float(out[0]) if np.isscalar(t) or np.ndim(t) == 0 else out

    def predict_variance(self, t):
        """Posterior variance at scalar or vector ``t``.

        Always within [0, K(t,t)]; tiny negatives from round-off are clamped
        to zero, anything beyond -1e-10 raises ``GPNumericsError``.
        """
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        prior = self.kernel(t_arr, t_arr)
        if self.n_observations == 0:
            var = prior
        else:
            k_vec = self.kernel(self.train_times[:, None], t_arr[None, :])
            v = solve_triangular(self.cholesky_factor, k_vec, lower=True)
            var = prior - np.sum(v * v, axis=0)
        if np.any(var < _VARIANCE_CLAMP):
            raise GPNumericsError(
                f"posterior variance {var.min():.3e} below tolerance {_VARIANCE_CLAMP}"
            )
        var = np.maximum(var, 0.0)
        return float(var[0]) if np.isscalar(t) or np.ndim(t) == 0 else var


def fit_posterior(
    times, values, kernel: WienerVelocityKernel, noise_var: float
) -> GPPosterior:
    """Fit a GP posterior by Cholesky factorization with escalating jitter.

    Args:
        times: observation times, >= 0, at least one.
        values: observed values, same length.
        kernel: covariance function.
        noise_var: observation noise variance (sigma_n^2), >= 0.

    Raises:
        IllConditionedKernelError: factorization fails even at jitter 1e-4.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size == 0:
        raise ValueError("fit_posterior needs at least one observation")
    if times.shape != values.shape:
        raise ValueError("times and values must have equal length")
    if noise_var < 0:
        raise ValueError(f"noise variance must be non-negative, got {noise_var}")

    gram = kernel.gram(times)
    noisy = gram + noise_var * np.eye(times.size)
    for jitter in _JITTERS:
        try:
            chol = np.linalg.cholesky(noisy + jitter * np.eye(times.size))
        except np.linalg.LinAlgError:
            continue
        weights = cho_solve((chol, True), values)
        return GPPosterior(kernel, times, values, noise_var, weights, chol, jitter)
    raise IllConditionedKernelError(
        f"Gram matrix of size {times.size} not positive definite at jitter {_JITTERS[-1]}"
    )


def _log_marginal_likelihood_terms(times, values):
    """Eigendecomposition of the unit-theta Gram, shared by all grid points.

    With G = Q diag(lam) Q^T, the likelihood of (theta, noise) needs only
    d_i = theta*lam_i + noise:  -0.5*sum(w_i^2/d_i) - 0.5*sum(log d_i) - n/2 log 2pi
    where w = Q^T z. Eigenvalues are clamped at zero (G is PSD).
    """
    unit_gram = WienerVelocityKernel(1.0).gram(times)
    lam, q = np.linalg.eigh(unit_gram)
    lam = np.maximum(lam, 0.0)
    w2 = (q.T @ values) ** 2
    return lam, w2


def _lml_on_pairs(lam, w2, thetas, noises):
    d = thetas[:, None] * lam[None, :] + noises[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        lml = -0.5 * np.sum(w2[None, :] / d, axis=1) - 0.5 * np.sum(np.log(d), axis=1)
    lml -= 0.5 * lam.size * np.log(2.0 * np.pi)
    lml[np.any(d <= 0, axis=1)] = -np.inf
    return np.where(np.isfinite(lml), lml, -np.inf)


def optimize_hyperparameters(times, values) -> tuple[WienerVelocityKernel, float]:
    """Maximize the log marginal likelihood over (theta, noise variance).

    Deterministic search: a 16x16 log-space grid over theta in [1e-3, 1e3]
    and noise variance in [1e-6, 1], followed by three refinement rounds
    that halve the log-step and re-center on the local 3x3 optimum. Results
    are clamped to the grid bounds.

    Args:
        times: at least 3 observation times.
        values: observations, same length.

    Returns:
        (kernel, noise_variance) at the likelihood optimum.

    Raises:
        HyperparameterSearchError: every candidate was ill-conditioned.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size < 3:
        raise ValueError(f"need at least 3 observations, got {times.size}")

    lam, w2 = _log_marginal_likelihood_terms(times, values)

    lo_t, hi_t = THETA_BOUNDS_LOG10
    lo_n, hi_n = NOISE_BOUNDS_LOG10
    log_thetas = np.linspace(lo_t, hi_t, GRID_POINTS)
    log_noises = np.linspace(lo_n, hi_n, GRID_POINTS)
    tt, nn = np.meshgrid(log_thetas, log_noises, indexing="ij")
    cand_t, cand_n = tt.ravel(), nn.ravel()

    lml = _lml_on_pairs(lam, w2, 10.0**cand_t, 10.0**cand_n)
    if not np.any(np.isfinite(lml)):
        raise HyperparameterSearchError("no finite log marginal likelihood on the grid")
    best = int(np.argmax(lml))
    best_t, best_n, best_lml = cand_t[best], cand_n[best], lml[best]

    step_t = (hi_t - lo_t) / (GRID_POINTS - 1)
    step_n = (hi_n - lo_n) / (GRID_POINTS - 1)
    offsets = np.array([-1.0, 0.0, 1.0])
    for _ in range(REFINEMENT_HALVINGS):
        step_t *= 0.5
        step_n *= 0.5
        ot, on = np.meshgrid(offsets * step_t, offsets * step_n, indexing="ij")
        cand_t = np.clip(best_t + ot.ravel(), lo_t, hi_t)
        cand_n = np.clip(best_n + on.ravel(), lo_n, hi_n)
        lml = _lml_on_pairs(lam, w2, 10.0**cand_t, 10.0**cand_n)
        k = int(np.argmax(lml))
        if lml[k] > best_lml:
            best_t, best_n, best_lml = cand_t[k], cand_n[k], lml[k]

    return WienerVelocityKernel(10.0**best_t), float(10.0**best_n)


@dataclass
class ReconstructedTrajectory:
    """Per-dimension GP posteriors for one trajectory; evaluable at any time."""

    id: int
    gp_x: GPPosterior
    gp_y: GPPosterior

    def __post_init__(self):
        if not np.array_equal(self.gp_x.train_times, self.gp_y.train_times):
            raise ValueError(f"trajectory {self.id}: x/y posteriors disagree on times")

    def mean_xy(self, times) -> np.ndarray:
        """Stack (mean_x, mean_y) at the given times into shape (2, N)."""
        return np.vstack([self.gp_x.predict_mean(times), self.gp_y.predict_mean(times)])


@dataclass
class TrajectorySet:
    """The reconstructed dataset: a stack of posterior mean functions."""

    members: list[ReconstructedTrajectory]

    def __post_init__(self):
        ids = [m.id for m in self.members]
        if len(set(ids)) != len(ids):
            raise ValueError("trajectory ids must be distinct")

    def __len__(self) -> int:
        return len(self.members)

    @property
    def ids(self) -> list[int]:
        return [m.id for m in self.members]

    def evaluate(self, times) -> tuple[np.ndarray, np.ndarray]:
        """Evaluate every member mean at a time vector.

        Returns:
            (mx, my), each of shape (J, N): row j is member j's mean curve.
        """
        times = np.asarray(times, dtype=float)
        mx = np.empty((len(self.members), times.size))
        my = np.empty_like(mx)
        for j, member in enumerate(self.members):
            mx[j] = member.gp_x.predict_mean(times)
            my[j] = member.gp_y.predict_mean(times)
        return mx, my

    def content_digest(self) -> str:
        """SHA-256 over ids and training data; stable across rebuilds."""
        h = hashlib.sha256()
        for m in self.members:
            h.update(str(m.id).encode())
            h.update(m.gp_x.train_times.tobytes())
            h.update(m.gp_x.train_values.tobytes())
            h.update(m.gp_y.train_values.tobytes())
        return h.hexdigest()


def reconstruct(traj) -> ReconstructedTrajectory:
    """Reconstruct one trajectory: optimized hyperparameters, one GP per axis."""
    try:
        posteriors = []
        for values in (traj.xs, traj.ys):
            kernel, noise_var = optimize_hyperparameters(traj.times, values)
            posteriors.append(fit_posterior(traj.times, values, kernel, noise_var))
    except Exception as exc:
        raise ReconstructionError({traj.id: exc}) from exc
    return ReconstructedTrajectory(traj.id, posteriors[0], posteriors[1])


def build_trajectory_set(trajs, workers: int | None = None) -> TrajectorySet:
    """Reconstruct every trajectory into a :class:`TrajectorySet`.

    Args:
        trajs: non-empty list of preprocessed trajectories.
        workers: thread count for parallel reconstruction; None or 1 runs
            serially. Results are identical either way.

    Raises:
        ReconstructionError: aggregated failures, listing the failed ids.
    """
    trajs = list(trajs)
    if not trajs:
        raise ValueError("cannot build a trajectory set from an empty list")

    failures: dict[int, Exception] = {}

    def _one(traj):
        try:
            return reconstruct(traj)
        except ReconstructionError as exc:
            failures[traj.id] = exc.__cause__ or exc
            return None

    if workers is None or workers <= 1:
        members = [_one(t) for t in trajs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            members = list(pool.map(_one, trajs))

    if failures:
        raise ReconstructionError(failures)
    return TrajectorySet([m for m in members if m is not None])
