"""Expected improvement, its unscented variant, and maximization over the cube.

EI is evaluated in the surrogate's standardized output space (maximization
convention).  The unscented variant averages EI over sigma points of an
isotropic parameter-noise distribution centered at the query, clamping points
to the unit cube before evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.optimize

from . import accel
from .exceptions import OptimizationError
from .gp import GPModel
from .unscented import UTConfig


@dataclass(frozen=True)
class AcquisitionContext:
    """Everything EI/UEI needs: surrogate, incumbent, and noise assumptions."""

    model: GPModel
    y_best: float
    noise_variance: float
    ut: UTConfig

    def __post_init__(self):
        if self.noise_variance < 0.0:
            raise ValueError("noise_variance must be non-negative")

    @classmethod
    def from_model(cls, model: GPModel, noise_variance: float,
                   k: float = 2.0) -> "AcquisitionContext":
        return cls(model=model, y_best=model.y_best_standardized,
                   noise_variance=noise_variance,
                   ut=UTConfig(k=k, dimension=model.dimension))


def _check_query(ctx: AcquisitionContext, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape[0] != ctx.model.dimension:
        raise ValueError(
            f"query dimension {x.shape[0]} != model dimension {ctx.model.dimension}")
    return x


def expected_improvement(ctx: AcquisitionContext, x) -> float:
    """Closed-form EI at x; falls back to max(mu - y_best, 0) for tiny variance."""
    x = _check_query(ctx, x)
    m = ctx.model
    h = m.hyperparams
    return float(accel.uei_value(x, 0.0, ctx.ut.k, m.data.thetas, m.chol,
                                 m.alpha, h.lengthscale, h.signal_variance,
                                 ctx.y_best))


def unscented_ei(ctx: AcquisitionContext, x) -> float:
    """EI averaged over clamped sigma points of N(x, I*noise_variance).

    Collapses to plain EI when the noise variance is zero.
    """
    x = _check_query(ctx, x)
    m = ctx.model
    h = m.hyperparams
    return float(accel.uei_value(x, ctx.noise_variance, ctx.ut.k,
                                 m.data.thetas, m.chol, m.alpha,
                                 h.lengthscale, h.signal_variance, ctx.y_best))


def make_objective(ctx: AcquisitionContext, unscented: bool = True):
    """Fast callable x -> acquisition value for the maximizer."""
    m = ctx.model
    h = m.hyperparams
    sigma2 = ctx.noise_variance if unscented else 0.0
    k = ctx.ut.k
    thetas, chol, alpha = m.data.thetas, m.chol, m.alpha
    ls, sv, y_best = h.lengthscale, h.signal_variance, ctx.y_best

    def objective(x: np.ndarray) -> float:
        return accel.uei_value(x, sigma2, k, thetas, chol, alpha, ls, sv, y_best)

    return objective


def maximize_acquisition(acq: Callable[[np.ndarray], float], dimension: int,
                         restarts: int, rng: np.random.Generator,
                         value_and_grad=None, max_steps: int = 60) -> np.ndarray:
    """Multi-restart bounded maximization over [0, 1]^dimension.

    Runs L-BFGS-B from `restarts` uniform starts (numeric gradients unless
    `value_and_grad` supplies analytic ones) and returns the best end point,
    breaking value ties lexicographically so the reduction is order-independent.
    Raises OptimizationError if every restart fails to produce a finite value.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    bounds = [(0.0, 1.0)] * dimension
    starts = rng.uniform(size=(restarts, dimension))
    if value_and_grad is None:
        def negated(x):
            return -acq(x)
        jac = None
    else:
        def negated(x):
            value, grad = value_and_grad(x)
            return -value, -grad
        jac = True

    best_x = None
    best_val = -np.inf
    for start in starts:
        try:
            res = scipy.optimize.minimize(negated, start, method="L-BFGS-B",
                                          jac=jac, bounds=bounds,
                                          options={"maxiter": max_steps})
        except (FloatingPointError, ValueError, ArithmeticError):
            continue
        candidates = []
        if np.all(np.isfinite(res.x)) and np.isfinite(res.fun):
            candidates.append((float(-res.fun), np.clip(res.x, 0.0, 1.0)))
        try:
            start_val = float(acq(start))
        except (FloatingPointError, ValueError, ArithmeticError):
            start_val = np.nan
        if np.isfinite(start_val):
            candidates.append((start_val, start))
        for val, x in candidates:
            if val > best_val or (val == best_val and best_x is not None
                                  and tuple(x) < tuple(best_x)):
                best_val = val
                best_x = x
    if best_x is None:
        raise OptimizationError("acquisition evaluation failed at every restart")
    return np.asarray(best_x, dtype=float)
