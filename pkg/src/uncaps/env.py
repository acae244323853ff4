"""Toy sim2real testbed: a parameterized linear plant and its noisy twin.

The simulator is a deterministic discrete-time linear system whose matrices
are built from physical parameters; normalized parameters in [0, 1]^d map
affinely onto physical ranges.  The "real world" shares the dynamics at a
hidden ground-truth parameter and adds i.i.d. Gaussian noise to every
transition.  Rewards are negative quadratic regulation costs evaluated on the
post-transition (observable) state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import accel
from .exceptions import NumericalError


@dataclass(frozen=True)
class PlantSpec:
    """Linear plant with an affine [0,1]^d -> physical parameter map."""

    param_low: np.ndarray
    param_high: np.ndarray
    param_names: tuple[str, ...]
    nominal: np.ndarray
    dynamics_fn: Callable[[np.ndarray, float], tuple[np.ndarray, np.ndarray]]
    s_target: np.ndarray
    q_reward: np.ndarray
    r_reward: np.ndarray
    dt: float
    fixed_init: np.ndarray
    init_halfwidth: np.ndarray

    def __post_init__(self):
        for name in ("param_low", "param_high", "nominal", "s_target",
                     "q_reward", "r_reward", "fixed_init", "init_halfwidth"):
            object.__setattr__(self, name, np.asarray(getattr(self, name),
                                                      dtype=float))
        if np.any(self.param_low >= self.param_high):
            raise ValueError("each parameter range must have lower < upper")
        if len(self.param_names) != self.param_low.shape[0]:
            raise ValueError("param_names must match the parameter dimension")
        q_eig = np.linalg.eigvalsh(0.5 * (self.q_reward + self.q_reward.T))
        if q_eig[0] < -1e-12:
            raise ValueError("state cost weights must be positive semidefinite")
        r_eig = np.linalg.eigvalsh(0.5 * (self.r_reward + self.r_reward.T))
        if r_eig[0] <= 0.0:
            raise ValueError("action cost weights must be positive definite")
        a, b = self.dynamics(np.full(self.dimension, 0.5))
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("dynamics are not finite at the cube midpoint")

    @property
    def dimension(self) -> int:
        return self.param_low.shape[0]

    @property
    def n_states(self) -> int:
        return self.s_target.shape[0]

    @property
    def n_actions(self) -> int:
        return self.r_reward.shape[0]

    def to_physical(self, theta) -> np.ndarray:
        """Full physical parameter vector; inactive components stay nominal."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape[0] != self.dimension:
            raise ValueError(
                f"theta dimension {theta.shape[0]} != plant dimension {self.dimension}")
        if theta.min() < -1e-12 or theta.max() > 1.0 + 1e-12:
            raise ValueError("theta must lie in [0, 1]^d")
        full = self.nominal.copy()
        full[:self.dimension] = self.param_low + theta * (self.param_high
                                                          - self.param_low)
        return full

    def dynamics(self, theta) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.dynamics_fn(self.to_physical(theta), self.dt)
        return np.asarray(a, dtype=float), np.asarray(b, dtype=float)

    def reward(self, state_next, action) -> float:
        e = np.asarray(state_next, dtype=float) - self.s_target
        u = np.asarray(action, dtype=float)
        return float(-(e @ self.q_reward @ e) - (u @ self.r_reward @ u))


@dataclass(frozen=True)
class SimulatedWorld:
    """Deterministic simulator pinned at one parameter vector."""

    plant: PlantSpec
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta",
                           np.atleast_1d(np.asarray(self.theta, dtype=float)))


@dataclass(frozen=True)
class RealWorldSpec:
    """The noisy twin: hidden ground-truth parameter plus transition noise."""

    plant: PlantSpec
    theta_r: np.ndarray
    noise_std: float = 0.0

    def __post_init__(self):
        theta_r = np.atleast_1d(np.asarray(self.theta_r, dtype=float))
        if theta_r.min() < 0.0 or theta_r.max() > 1.0:
            raise ValueError("theta_r must lie in [0, 1]^d")
        if self.noise_std < 0.0:
            raise ValueError("noise_std must be non-negative")
        object.__setattr__(self, "theta_r", theta_r)


@dataclass(frozen=True)
class EpisodeConfig:
    """Episode length, initial state (fixed vector or None for a seeded
    uniform draw around the target), and the RNG seed."""

    horizon: int
    initial_state: np.ndarray | None
    seed: int

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.initial_state is not None:
            object.__setattr__(self, "initial_state",
                               np.asarray(self.initial_state, dtype=float))


# ---------------------------------------------------------------------------
# Default plant: 1-DOF mass-spring-damper, forward-Euler discretized
# ---------------------------------------------------------------------------

MSD_PARAM_NAMES = ("mass", "spring", "damping", "gain", "blend")
MSD_PARAM_LOW = np.array([0.5, 0.5, 0.05, 0.5, 0.0])
MSD_PARAM_HIGH = np.array([2.0, 5.0, 1.0, 1.5, 1.0])
MSD_NOMINAL = np.array([1.0, 2.0, 0.4, 1.0, 0.0])


def msd_matrices(phys: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Discrete (A, B) for the mass-spring-damper.

    blend in [0, 1] mixes forward-Euler (0) and semi-implicit (1) position
    updates, so it reshapes both A and B.
    """
    mass, spring, damping, gain, blend = phys
    p = -spring * dt / mass
    q = 1.0 - damping * dt / mass
    r = gain * dt / mass
    a = np.array([[1.0 + dt * blend * p, dt * (1.0 - blend + blend * q)],
                  [p, q]])
    b = np.array([[dt * blend * r], [r]])
    return a, b


def mass_spring_damper(dimension: int = 3, dt: float = 0.05,
                       q_position: float = 1.0, q_velocity: float = 0.1,
                       action_cost: float = 0.05,
                       fixed_init=(1.0, 0.0),
                       init_halfwidth=(1.0, 1.0),
                       param_low=None, param_high=None) -> PlantSpec:
    """Default testbed plant with up to five latent parameters.

    The first `dimension` parameters of (mass, spring, damping, gain, blend)
    are latent and mapped from [0, 1]; the rest stay at nominal values.
    `param_low`/`param_high` override the physical ranges of the latent
    components (for heterogeneous-gain configurations).
    """
    if not 1 <= dimension <= 5:
        raise ValueError("dimension must be between 1 and 5")
    low = MSD_PARAM_LOW[:dimension] if param_low is None \
        else np.asarray(param_low, dtype=float)
    high = MSD_PARAM_HIGH[:dimension] if param_high is None \
        else np.asarray(param_high, dtype=float)
    return PlantSpec(
        param_low=low,
        param_high=high,
        param_names=MSD_PARAM_NAMES[:dimension],
        nominal=MSD_NOMINAL,
        dynamics_fn=msd_matrices,
        s_target=np.zeros(2),
        q_reward=np.diag([q_position, q_velocity]),
        r_reward=np.array([[action_cost]]),
        dt=dt,
        fixed_init=np.asarray(fixed_init, dtype=float),
        init_halfwidth=np.asarray(init_halfwidth, dtype=float),
    )


# ---------------------------------------------------------------------------
# Stepping and rollouts
# ---------------------------------------------------------------------------


def _step(plant: PlantSpec, a, b, s, u, noise) -> tuple[np.ndarray, float]:
    s_next = a @ s + b @ u + noise
    if not np.all(np.isfinite(s_next)):
        raise NumericalError("transition produced a non-finite state")
    return s_next, plant.reward(s_next, u)


def sim_step(plant: PlantSpec, theta, s, u) -> tuple[np.ndarray, float]:
    """One deterministic simulator transition and its reward."""
    a, b = plant.dynamics(theta)
    s = np.asarray(s, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return _step(plant, a, b, s, u, 0.0)


def real_step(world: RealWorldSpec, s, u,
              rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """One noisy real-world transition at the hidden ground truth."""
    a, b = world.plant.dynamics(world.theta_r)
    s = np.asarray(s, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    noise = rng.normal(0.0, world.noise_std, size=world.plant.n_states)
    return _step(world.plant, a, b, s, u, noise)


def _unpack(target) -> tuple[PlantSpec, np.ndarray, float]:
    if isinstance(target, RealWorldSpec):
        return target.plant, target.theta_r, target.noise_std
    if isinstance(target, SimulatedWorld):
        return target.plant, target.theta, 0.0
    raise ValueError(f"unsupported rollout target {type(target).__name__}")


def rollout(target, policy, cfg: EpisodeConfig) -> float:
    """Run one episode and return cumulative reward; deterministic given seed.

    The initial state (when random) and the full noise block are drawn up
    front from the episode RNG, so the realized noise does not depend on the
    policy.  Linear feedback rules matching the plant target run through the
    compiled rollout kernel.
    """
    from .policy import LinearFeedbackRule

    plant, theta, noise_std = _unpack(target)
    rng = np.random.default_rng(cfg.seed)
    if cfg.initial_state is not None:
        s = cfg.initial_state.copy()
    else:
        s = plant.s_target + rng.uniform(-plant.init_halfwidth,
                                         plant.init_halfwidth)
    a, b = plant.dynamics(theta)
    noise = rng.normal(0.0, noise_std, size=(cfg.horizon, plant.n_states))
    if isinstance(policy, LinearFeedbackRule) and np.array_equal(
            policy.target, plant.s_target):
        total = accel.rollout_gain(a, b, np.asarray(policy.gain, dtype=float),
                                   plant.s_target, s, plant.q_reward,
                                   plant.r_reward, noise)
        if not np.isfinite(total):
            raise NumericalError("rollout diverged to a non-finite reward")
        return float(total)
    total = 0.0
    for t in range(cfg.horizon):
        u = np.atleast_1d(np.asarray(policy(s), dtype=float))
        s, r = _step(plant, a, b, s, u, noise[t])
        total += r
    return total


def jumpstart_eval(world: RealWorldSpec, policy, episodes: int, horizon: int,
                   rng: np.random.Generator) -> tuple[float, float]:
    """Mean and standard error of episodic reward over random-init episodes."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    seeds = rng.integers(0, 2**63 - 1, size=episodes)
    rewards = np.array([
        rollout(world, policy, EpisodeConfig(horizon=horizon,
                                             initial_state=None,
                                             seed=int(seed)))
        for seed in seeds
    ])
    mean = float(rewards.mean())
    stderr = float(rewards.std(ddof=1) / np.sqrt(episodes)) if episodes > 1 else 0.0
    return mean, stderr
