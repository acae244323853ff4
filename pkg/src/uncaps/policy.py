"""Parameter-conditioned policies and the transfer-time action rules.

The policy provider plays the role of a pre-trained library of per-parameter
policies: given a simulation parameter vector it returns the action its
policy would take in a state.  Here that library is exact - an infinite-
horizon discrete-time LQR gain per parameter - so every fetched policy comes
with an optimality certificate (the Riccati residual) instead of a training
run.

Three transfer rules combine fetched policies:

* unscented action selection - weighted average of actions at sigma points of
  an isotropic parameter-noise distribution;
* averaged policy - plain mean of actions over a sampled optimal-parameter
  set;
* Gaussian-approximation - fit mean/isotropic variance to the sampled set and
  reuse unscented action selection (2d+1 fetches per action).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import accel
from .env import PlantSpec
from .exceptions import NumericalError
from .rff import OptimalParamSet
from .unscented import isotropic_sigma_points

RICCATI_TOL = 1e-12
RICCATI_MAX_ITER = 10_000
GAIN_CACHE_QUANTUM = 1e-6


class PolicyProvider(Protocol):
    """Deterministic action oracle conditioned on a simulation parameter."""

    def action(self, theta: np.ndarray, state: np.ndarray) -> np.ndarray: ...


def solve_dare(a: np.ndarray, b: np.ndarray, q: np.ndarray,
               r: np.ndarray) -> np.ndarray:
    """Fixed-point solution of the discrete algebraic Riccati equation.

    Iterates P <- Q + A'PA - A'PB (R + B'PB)^-1 B'PA from P = Q; raises
    NumericalError if 10^4 iterations do not converge.
    """
    p, iterations = accel.dare_solve(np.asarray(a, dtype=float),
                                     np.asarray(b, dtype=float),
                                     np.asarray(q, dtype=float),
                                     np.asarray(r, dtype=float),
                                     RICCATI_TOL, RICCATI_MAX_ITER)
    if iterations < 0 or not np.all(np.isfinite(p)):
        raise NumericalError(
            f"Riccati iteration did not converge in {RICCATI_MAX_ITER} steps")
    return p


def dlqr_gain(a: np.ndarray, b: np.ndarray, q: np.ndarray,
              r: np.ndarray) -> np.ndarray:
    """Optimal state-feedback gain K for u = -K s under quadratic cost."""
    p = solve_dare(a, b, q, r)
    btp = b.T @ p
    return np.linalg.solve(r + btp @ b, btp @ a)


@dataclass
class LQRPolicyProvider:
    """Exact per-parameter LQR policies over a linear plant.

    Gains are memoized keyed on the parameter quantized to 1e-6 per component
    (the gain is computed at the quantized parameter, so cache hits are
    bit-identical to fresh solves).  The memo table is thread-safe.
    """

    plant: PlantSpec
    q_cost: np.ndarray | None = None
    r_cost: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        if self.q_cost is None:
            self.q_cost = self.plant.q_reward
        if self.r_cost is None:
            self.r_cost = self.plant.r_reward
        self.q_cost = np.asarray(self.q_cost, dtype=float)
        self.r_cost = np.asarray(self.r_cost, dtype=float)

    @property
    def dimension(self) -> int:
        return self.plant.dimension

    @property
    def s_target(self) -> np.ndarray:
        return self.plant.s_target

    def gain(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape[0] != self.plant.dimension:
            raise ValueError("theta dimension does not match the plant")
        quantized = np.round(theta / GAIN_CACHE_QUANTUM) * GAIN_CACHE_QUANTUM
        key = tuple(quantized.tolist())
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        a, b = self.plant.dynamics(np.clip(quantized, 0.0, 1.0))
        gain = dlqr_gain(a, b, self.q_cost, self.r_cost)
        gain.setflags(write=False)
        with self._lock:
            return self._cache.setdefault(key, gain)

    def action(self, theta, state) -> np.ndarray:
        state = np.asarray(state, dtype=float)
        return -self.gain(theta) @ (state - self.plant.s_target)

    def mean_gain(self, thetas: np.ndarray) -> np.ndarray:
        """Elementwise mean of per-parameter gains (actions are linear in the
        gain, so feeding this to linear feedback equals averaging actions)."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        total = np.zeros((self.r_cost.shape[0], self.q_cost.shape[0]))
        for theta in thetas:
            total += self.gain(theta)
        return total / thetas.shape[0]


def uas_action(provider: PolicyProvider, theta_hat, noise_variance: float,
               k: float, state) -> np.ndarray:
    """Unscented action selection: UT-weighted average of fetched actions.

    Sigma points of N(theta_hat, I*noise_variance) are clamped to the cube
    before fetching.  Zero variance returns the plain action exactly.
    """
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    if noise_variance < 0.0:
        raise ValueError("noise_variance must be non-negative")
    if noise_variance == 0.0:
        return np.asarray(provider.action(theta_hat, state), dtype=float)
    sp = isotropic_sigma_points(theta_hat, noise_variance, k)
    points = np.clip(sp.points, 0.0, 1.0)
    actions = np.stack([np.asarray(provider.action(p, state), dtype=float)
                        for p in points])
    return sp.weights @ actions


def averaged_policy_action(provider: PolicyProvider,
                           theta_set: OptimalParamSet | np.ndarray,
                           state) -> np.ndarray:
    """Unweighted mean of the actions fetched at every sampled parameter."""
    thetas = theta_set.samples if isinstance(theta_set, OptimalParamSet) \
        else np.atleast_2d(np.asarray(theta_set, dtype=float))
    if thetas.shape[0] == 0:
        raise ValueError("theta set must be non-empty")
    actions = np.stack([np.asarray(provider.action(t, state), dtype=float)
                        for t in thetas])
    return actions.mean(axis=0)


def gaussian_fit(thetas: np.ndarray) -> tuple[np.ndarray, float]:
    """Componentwise mean and isotropic variance (mean of unbiased
    per-component sample variances) of a parameter sample."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if thetas.shape[0] < 2:
        raise ValueError("need at least two samples to fit a Gaussian")
    mean = thetas.mean(axis=0)
    variance = float(np.mean(np.var(thetas, axis=0, ddof=1)))
    return mean, variance


def ga_action(provider: PolicyProvider, theta_set: OptimalParamSet | np.ndarray,
              k: float, state) -> np.ndarray:
    """Gaussian-approximation action: fit N(mu, I*var) to the sampled optimal
    parameters, then run unscented action selection at the fitted mean."""
    thetas = theta_set.samples if isinstance(theta_set, OptimalParamSet) \
        else np.atleast_2d(np.asarray(theta_set, dtype=float))
    mean, variance = gaussian_fit(thetas)
    return uas_action(provider, np.clip(mean, 0.0, 1.0), variance, k, state)


# ---------------------------------------------------------------------------
# Action rules: callables state -> action consumed by rollouts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearFeedbackRule:
    """u = -gain @ (state - target); also exposes the pieces for fast rollouts."""

    gain: np.ndarray
    target: np.ndarray

    def __call__(self, state) -> np.ndarray:
        return -self.gain @ (np.asarray(state, dtype=float) - self.target)


@dataclass(frozen=True)
class PlainPolicyRule:
    provider: PolicyProvider
    theta: np.ndarray

    def __call__(self, state) -> np.ndarray:
        return np.asarray(self.provider.action(self.theta, state), dtype=float)


@dataclass(frozen=True)
class UASPolicyRule:
    provider: PolicyProvider
    theta: np.ndarray
    noise_variance: float
    k: float

    def __call__(self, state) -> np.ndarray:
        return uas_action(self.provider, self.theta, self.noise_variance,
                          self.k, state)


@dataclass(frozen=True)
class AveragedPolicyRule:
    provider: PolicyProvider
    thetas: np.ndarray

    def __call__(self, state) -> np.ndarray:
        return averaged_policy_action(self.provider, self.thetas, state)


@dataclass(frozen=True)
class GAPolicyRule:
    provider: PolicyProvider
    thetas: np.ndarray
    k: float

    def __call__(self, state) -> np.ndarray:
        return ga_action(self.provider, self.thetas, self.k, state)
