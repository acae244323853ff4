"""Gaussian-process regression over the normalized simulation-parameter cube.

The model standardizes its targets internally (zero mean, unit variance) and
de-standardizes on query, so the configured hyperparameters always refer to
the standardized output scale.  Fitting produces an immutable model holding a
Cholesky factor of the regularized kernel matrix; queries are cheap and safe
to run from concurrent readers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize

from . import accel
from .exceptions import NumericalError

JITTER_INITIAL = 1e-10
JITTER_MAX = 1e-4


@dataclass(frozen=True)
class GPHyperparams:
    """RBF-kernel hyperparameters: amplitude, width and observation noise."""

    lengthscale: float = 0.2
    signal_variance: float = 1.0
    noise_variance: float = 1e-4

    def __post_init__(self):
        if not self.lengthscale > 0.0:
            raise ValueError(f"lengthscale must be positive, got {self.lengthscale}")
        if not self.signal_variance > 0.0:
            raise ValueError(
                f"signal_variance must be positive, got {self.signal_variance}")
        if self.noise_variance < 0.0:
            raise ValueError(
                f"noise_variance must be non-negative, got {self.noise_variance}")


@dataclass(frozen=True)
class ObservationSet:
    """Ordered (theta, reward) pairs with theta in the unit cube."""

    thetas: np.ndarray
    rewards: np.ndarray

    def __post_init__(self):
        thetas = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        rewards = np.asarray(self.rewards, dtype=float).ravel()
        if thetas.shape[0] != rewards.shape[0]:
            raise ValueError("thetas and rewards must have matching lengths")
        if thetas.size and (thetas.min() < 0.0 or thetas.max() > 1.0):
            raise ValueError("every theta must lie in [0, 1]^d")
        if not np.all(np.isfinite(rewards)):
            raise ValueError("rewards must be finite")
        thetas = thetas.copy()
        rewards = rewards.copy()
        thetas.setflags(write=False)
        rewards.setflags(write=False)
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "rewards", rewards)

    @property
    def dimension(self) -> int:
        return self.thetas.shape[1]

    def __len__(self) -> int:
        return self.thetas.shape[0]

    def append(self, theta, reward) -> "ObservationSet":
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return ObservationSet(
            np.vstack([self.thetas, theta[None, :]]),
            np.append(self.rewards, float(reward)),
        )


def standardize_targets(rewards: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Return (standardized y, mean, scale); scale falls back to 1 for constant y."""
    mean = float(np.mean(rewards))
    scale = float(np.std(rewards))
    if scale <= 0.0:
        scale = 1.0
    return (rewards - mean) / scale, mean, scale


def rbf_kernel(x, y, hyperparams: GPHyperparams) -> float:
    """Squared-exponential kernel value for a single pair of points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    sq = float(np.sum((x - y) ** 2))
    ell = hyperparams.lengthscale
    return hyperparams.signal_variance * float(np.exp(-sq / (2.0 * ell * ell)))


class GPModel:
    """Fitted GP; immutable after construction.  Build via :func:`fit`."""

    def __init__(self, hyperparams: GPHyperparams, data: ObservationSet,
                 chol: np.ndarray, alpha: np.ndarray, y_mean: float,
                 y_scale: float, jitter: float):
        self.hyperparams = hyperparams
        self.data = data
        self.chol = chol
        self.alpha = alpha
        self.y_mean = y_mean
        self.y_scale = y_scale
        self.jitter = jitter
        chol.setflags(write=False)
        alpha.setflags(write=False)

    @property
    def dimension(self) -> int:
        return self.data.dimension

    @property
    def y_standardized(self) -> np.ndarray:
        return (self.data.rewards - self.y_mean) / self.y_scale

    @property
    def y_best_standardized(self) -> float:
        return float(np.max(self.y_standardized))

    def _queries(self, x) -> tuple[np.ndarray, bool]:
        arr = np.asarray(x, dtype=float)
        single = arr.ndim == 1
        arr = np.atleast_2d(arr)
        if arr.shape[1] != self.dimension:
            raise ValueError(
                f"query dimension {arr.shape[1]} != model dimension {self.dimension}")
        return arr, single

    def posterior_standardized(self, x):
        """Posterior mean/variance of the latent function on the standardized scale."""
        queries, single = self._queries(x)
        h = self.hyperparams
        mean, var = accel.chol_posterior(self.data.thetas, self.chol, self.alpha,
                                         queries, h.lengthscale, h.signal_variance)
        if single:
            return float(mean[0]), float(var[0])
        return mean, var

    def posterior(self, x):
        """Posterior mean/variance de-standardized back to reward units."""
        mean, var = self.posterior_standardized(x)
        scale = self.y_scale
        return self.y_mean + scale * mean, scale * scale * var

    def log_marginal_likelihood(self) -> float:
        """Evidence of the standardized targets under the current hyperparameters.

        Differs from the raw-target evidence by the constant -n*log(y_scale),
        which does not affect hyperparameter ranking.
        """
        diag = np.diag(self.chol)
        if not np.all(np.isfinite(diag)) or np.any(diag <= 0.0):
            raise NumericalError("invalid Cholesky factor")
        y = self.y_standardized
        n = len(self.data)
        return float(-0.5 * y @ self.alpha - np.sum(np.log(diag))
                     - 0.5 * n * np.log(2.0 * np.pi))


def fit(data: ObservationSet, hyperparams: GPHyperparams | None = None) -> GPModel:
    """Condition a GP on the observations.

    Raises NumericalError if the kernel matrix stays non-positive-definite
    after escalating diagonal jitter up to 1e-4.
    """
    if hyperparams is None:
        hyperparams = GPHyperparams()
    if len(data) == 0:
        raise ValueError("cannot fit a GP on an empty observation set")
    y_std, y_mean, y_scale = standardize_targets(data.rewards)
    k = accel.rbf_matrix(data.thetas, data.thetas, hyperparams.lengthscale,
                         hyperparams.signal_variance)
    k = 0.5 * (k + k.T)
    k[np.diag_indices_from(k)] += hyperparams.noise_variance
    chol, jitter = _cholesky_with_jitter(k)
    alpha = scipy.linalg.solve_triangular(
        chol.T, scipy.linalg.solve_triangular(chol, y_std, lower=True), lower=False)
    return GPModel(hyperparams, data, chol, alpha, y_mean, y_scale, jitter)


def _cholesky_with_jitter(k: np.ndarray) -> tuple[np.ndarray, float]:
    try:
        return np.linalg.cholesky(k), 0.0
    except np.linalg.LinAlgError:
        pass
    jitter = JITTER_INITIAL
    eye = np.eye(k.shape[0])
    while jitter <= JITTER_MAX:
        try:
            return np.linalg.cholesky(k + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalError(
        f"kernel matrix not positive definite after jitter {JITTER_MAX}")


_HYPER_BOUNDS = ((0.03, 3.0), (0.05, 20.0), (1e-7, 1.0))


def fit_optimized(data: ObservationSet, rng: np.random.Generator,
                  n_restarts: int = 10) -> GPModel:
    """Fit with hyperparameters chosen by multi-restart evidence maximization.

    Restart initializations are log-uniform inside fixed bounds; the best
    restart by evidence wins, with the fixed defaults always kept as a
    candidate so the optimized model is never worse than the default one.
    """
    if len(data) == 0:
        raise ValueError("cannot fit a GP on an empty observation set")

    def objective(log_params):
        try:
            h = GPHyperparams(*np.exp(log_params))
            return -fit(data, h).log_marginal_likelihood()
        except (NumericalError, ValueError):
            return 1e12

    lo = np.log([b[0] for b in _HYPER_BOUNDS])
    hi = np.log([b[1] for b in _HYPER_BOUNDS])
    starts = [np.log(np.array([GPHyperparams().lengthscale,
                               GPHyperparams().signal_variance,
                               GPHyperparams().noise_variance]))]
    for _ in range(n_restarts - 1):
        starts.append(rng.uniform(lo, hi))
    best_h, best_val = GPHyperparams(), -objective(starts[0])
    for start in starts:
        res = scipy.optimize.minimize(objective, start, method="L-BFGS-B",
                                      bounds=list(zip(lo, hi)))
        if np.isfinite(res.fun) and -res.fun > best_val:
            best_val = -res.fun
            best_h = GPHyperparams(*np.exp(res.x))
    return fit(data, best_h)
