"""Domain-randomization baseline at toy scale.

Instead of retraining a policy on randomized transitions, the baseline
averages the exact per-parameter gains over uniformly sampled parameters -
a training-free stand-in for a single policy fit across randomized dynamics.
The resulting rule ignores any claimed parameter at action time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .policy import LQRPolicyProvider, LinearFeedbackRule

DEFAULT_DR_SAMPLES = 256


@dataclass(frozen=True)
class DRConfig:
    """Sample count, sampling box (defaults to the full cube), and seed."""

    samples: int = DEFAULT_DR_SAMPLES
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        for name in ("lower", "upper"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name,
                                   np.atleast_1d(np.asarray(value, dtype=float)))

    def box(self, dimension: int) -> tuple[np.ndarray, np.ndarray]:
        lower = np.zeros(dimension) if self.lower is None else self.lower
        upper = np.ones(dimension) if self.upper is None else self.upper
        if lower.shape[0] != dimension or upper.shape[0] != dimension:
            raise ValueError("sampling box does not match the parameter dimension")
        if np.any(lower < 0.0) or np.any(upper > 1.0) or np.any(lower > upper):
            raise ValueError("sampling box must satisfy 0 <= lower <= upper <= 1")
        return lower, upper


def dr_policy(cfg: DRConfig, provider: LQRPolicyProvider) -> LinearFeedbackRule:
    """Mean-gain rule over parameters sampled uniformly from the config box."""
    d = provider.dimension
    lower, upper = cfg.box(d)
    rng = np.random.default_rng(cfg.seed)
    thetas = rng.uniform(lower, upper, size=(cfg.samples, d))
    return LinearFeedbackRule(gain=provider.mean_gain(thetas),
                              target=provider.s_target)
