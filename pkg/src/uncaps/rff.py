"""Random-Fourier-feature linearization of the GP and optimal-parameter sampling.

A feature map phi(theta) = sqrt(2/m) * cos(omega @ theta + b) with omegas from
the RBF spectral density (componentwise Gaussian, std 1/lengthscale) and
phases uniform on [0, 2pi] turns the GP into a Bayesian linear model.  Drawing
posterior weight vectors and maximizing each draw over the cube yields a
sample of plausibly-optimal parameters whose spread reflects estimation
uncertainty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import accel
from .acquisition import maximize_acquisition
from .exceptions import NumericalError
from .gp import GPHyperparams, ObservationSet, standardize_targets

DEFAULT_N_SAMPLES = 250
DEFAULT_N_FEATURES = 2000
SAMPLE_OPT_RESTARTS = 20


@dataclass(frozen=True)
class RFFMap:
    """Spectral frequencies (m, d) and phases (m,) defining one feature map."""

    omegas: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        omegas = np.atleast_2d(np.asarray(self.omegas, dtype=float))
        phases = np.asarray(self.phases, dtype=float).ravel()
        if omegas.shape[0] != phases.shape[0]:
            raise ValueError("omegas and phases must have matching feature counts")
        if phases.size and (phases.min() < 0.0 or phases.max() > 2.0 * np.pi):
            raise ValueError("phases must lie in [0, 2pi]")
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "phases", phases)

    @property
    def m(self) -> int:
        return self.omegas.shape[0]

    @property
    def dimension(self) -> int:
        return self.omegas.shape[1]


@dataclass(frozen=True)
class LinearGPSample:
    """One approximate GP draw f(theta) = features(map, theta) @ weights."""

    map: RFFMap
    weights: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float).ravel()
        if weights.shape[0] != self.map.m:
            raise ValueError("weights length must equal the feature count")
        object.__setattr__(self, "weights", weights)

    def value(self, theta) -> float:
        return float(features(self.map, theta) @ self.weights)

    def value_and_grad(self, theta) -> tuple[float, np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        amp = math.sqrt(2.0 / self.map.m)
        return accel.rff_value_grad(theta, self.map.omegas, self.map.phases,
                                    self.weights, amp)


@dataclass(frozen=True)
class OptimalParamSet:
    """Sampled plausibly-optimal parameters, one row per posterior draw."""

    samples: np.ndarray

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if samples.shape[0] < 1:
            raise ValueError("need at least one sample")
        if samples.min() < 0.0 or samples.max() > 1.0:
            raise ValueError("samples must lie in [0, 1]^d")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def dimension(self) -> int:
        return self.samples.shape[1]


def sample_rff_map(hyperparams: GPHyperparams, dimension: int, m: int,
                   rng: np.random.Generator) -> RFFMap:
    """Draw a fresh feature map for the RBF kernel at the given lengthscale."""
    if m < 1:
        raise ValueError("feature count must be >= 1")
    omegas = rng.normal(0.0, 1.0 / hyperparams.lengthscale, size=(m, dimension))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=m)
    return RFFMap(omegas=omegas, phases=phases)


def features(rff_map: RFFMap, theta) -> np.ndarray:
    """Feature vector sqrt(2/m) * cos(omega_i . theta + b_i); accepts batches."""
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    theta = np.atleast_2d(theta)
    if theta.shape[1] != rff_map.dimension:
        raise ValueError(
            f"theta dimension {theta.shape[1]} != map dimension {rff_map.dimension}")
    out = accel.rff_features(theta, rff_map.omegas, rff_map.phases)
    return out[0] if single else out


def sample_posterior_weights(rff_map: RFFMap, data: ObservationSet,
                             noise_variance: float, rng: np.random.Generator,
                             signal_variance: float = 1.0) -> LinearGPSample:
    """Draw weights from the Bayesian-linear-model posterior given the data.

    The draw has exactly the posterior law N(A^-1 Phi^T y, sigma_N^2 A^-1)
    with A = Phi^T Phi + sigma_N^2 I, obtained by conditioning a joint prior
    sample (Matheron's rule), which costs O(n^2 m) instead of O(m^3).  Targets
    are standardized the same way the GP standardizes them; the kernel
    amplitude is folded into the stored weights so value() is on the
    standardized output scale.
    """
    if len(data) == 0:
        raise ValueError("cannot sample posterior weights from an empty data set")
    if noise_variance <= 0.0:
        raise ValueError("noise_variance must be positive")
    y_std, _, _ = standardize_targets(data.rewards)
    root_sv = math.sqrt(signal_variance)
    phi = root_sv * features(rff_map, data.thetas)
    w_prior = rng.standard_normal(rff_map.m)
    eps = rng.normal(0.0, math.sqrt(noise_variance), size=len(data))
    gram = phi @ phi.T
    gram[np.diag_indices_from(gram)] += noise_variance
    try:
        correction = np.linalg.solve(gram, y_std - phi @ w_prior - eps)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("posterior weight system is singular") from exc
    weights = w_prior + phi.T @ correction
    return LinearGPSample(map=rff_map, weights=root_sv * weights)


def opt_latent_dist(data: ObservationSet, n_samples: int, n_features: int,
                    hyperparams: GPHyperparams, rng: np.random.Generator,
                    restarts: int = SAMPLE_OPT_RESTARTS) -> OptimalParamSet:
    """Sample the optimal-parameter distribution from GP posterior draws.

    For each of `n_samples` draws: sample a fresh feature map, sample posterior
    weights, and maximize the resulting linear function over the cube.  Each
    draw consumes an independent child RNG stream, so results are deterministic
    given the seed and ordered by sample index.
    """
    if len(data) == 0:
        raise ValueError("cannot estimate the optimal-parameter distribution "
                         "from an empty data set")
    if n_samples < 1 or n_features < 1:
        raise ValueError("n_samples and n_features must be >= 1")
    d = data.dimension
    out = np.empty((n_samples, d))
    for i, child in enumerate(rng.spawn(n_samples)):
        try:
            rff_map = sample_rff_map(hyperparams, d, n_features, child)
            draw = sample_posterior_weights(rff_map, data,
                                            hyperparams.noise_variance, child,
                                            hyperparams.signal_variance)
            out[i] = maximize_acquisition(draw.value, d, restarts, child,
                                          value_and_grad=draw.value_and_grad)
        except NumericalError as exc:
            raise NumericalError(f"posterior sample {i} failed: {exc}") from exc
    return OptimalParamSet(samples=out)
