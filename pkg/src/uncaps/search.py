"""The full policy-search loop: BO over simulation parameters with
noise-aware acquisition and action selection, plus final-policy assembly.

Four variants share one loop.  StandardBO suggests with plain EI and acts
with the plain fetched policy; the uncertainty-aware variants suggest with
unscented EI and act through unscented action selection.  Finalization
differs: StandardBO and the no-epistemic ablation return the best observed
parameter's rule, while the full method (and its Gaussian-approximation
ablation) sample an optimal-parameter distribution from GP posterior draws
and build an averaged rule from it.

All RNG streams are derived from the master seed in a variant-independent
order, so variants that are mathematically equivalent at zero noise produce
identical suggestion sequences under a shared seed.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .acquisition import AcquisitionContext, make_objective, maximize_acquisition
from .env import EpisodeConfig, RealWorldSpec, rollout
from .gp import GPHyperparams, GPModel, ObservationSet, fit, fit_optimized
from .policy import (LQRPolicyProvider, LinearFeedbackRule, AveragedPolicyRule,
                     GAPolicyRule, PlainPolicyRule, UASPolicyRule)
from .rff import OptimalParamSet, opt_latent_dist


class Variant(enum.Enum):
    STANDARD_BO = "StandardBO"
    UNCAPS_EP = "UncAPS-EP"
    UNCAPS_GA = "UncAPS+GA"
    UNCAPS = "UncAPS"


_VARIANT_ALIASES = {
    "standardbo": Variant.STANDARD_BO,
    "bo": Variant.STANDARD_BO,
    "uncaps": Variant.UNCAPS,
    "uncapsep": Variant.UNCAPS_EP,
    "uncapsminusep": Variant.UNCAPS_EP,
    "uncapsga": Variant.UNCAPS_GA,
    "uncapsplusga": Variant.UNCAPS_GA,
}


def parse_variant(name: str | Variant) -> Variant:
    if isinstance(name, Variant):
        return name
    key = "".join(c for c in name.lower() if c.isalnum())
    try:
        return _VARIANT_ALIASES[key]
    except KeyError:
        raise ValueError(f"unknown variant {name!r}; expected one of "
                         f"{[v.value for v in Variant]}") from None


@dataclass(frozen=True)
class SearchConfig:
    """Knobs of one policy-search run; defaults follow the standard protocol
    (25 iterations from 3 random samples, k=2, 250 draws of 2000 features)."""

    iterations: int = 25
    n_init: int = 3
    variant: Variant = Variant.UNCAPS
    noise_variance: float = 0.01
    ut_k: float = 2.0
    opt_samples: int = 250
    n_features: int = 2000
    gp_mode: str = "fixed"
    gp_hyperparams: GPHyperparams = field(default_factory=GPHyperparams)
    acq_restarts: int = 50
    rff_restarts: int = 20
    horizon: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.n_init < 1:
            raise ValueError("n_init must be >= 1")
        if self.noise_variance < 0.0:
            raise ValueError("noise_variance must be non-negative")
        if self.gp_mode not in ("fixed", "optimize"):
            raise ValueError("gp_mode must be 'fixed' or 'optimize'")
        object.__setattr__(self, "variant", parse_variant(self.variant))


@dataclass(frozen=True)
class IterationRecord:
    index: int
    theta: np.ndarray
    y: float
    best_y: float
    wall_time: float


@dataclass
class SearchTrace:
    """Everything a run produced: per-evaluation records, the sampled
    optimal-parameter set (full method only), and a final-rule descriptor."""

    variant: Variant
    records: list[IterationRecord]
    theta_star: OptimalParamSet | None
    final_descriptor: str
    surrogate_hyperparams: GPHyperparams

    @property
    def thetas(self) -> np.ndarray:
        return np.stack([r.theta for r in self.records])

    @property
    def rewards(self) -> np.ndarray:
        return np.array([r.y for r in self.records])

    @property
    def best_index(self) -> int:
        return int(np.argmax(self.rewards))

    @property
    def best_theta(self) -> np.ndarray:
        return self.records[self.best_index].theta

    @property
    def best_y(self) -> float:
        return self.records[self.best_index].y

    def data(self) -> ObservationSet:
        return ObservationSet(self.thetas, self.rewards)


def _eval_rule(cfg: SearchConfig, provider, theta: np.ndarray):
    if cfg.variant is Variant.STANDARD_BO:
        return PlainPolicyRule(provider, theta)
    return UASPolicyRule(provider, theta, cfg.noise_variance, cfg.ut_k)


def _fit_surrogate(cfg: SearchConfig, data: ObservationSet,
                   rng: np.random.Generator) -> GPModel:
    if cfg.gp_mode == "optimize":
        return fit_optimized(data, rng)
    return fit(data, cfg.gp_hyperparams)


def policy_search(cfg: SearchConfig, provider,
                  world: RealWorldSpec) -> SearchTrace:
    """Run the whole search; consumes exactly n_init + iterations real-world
    evaluation windows and is deterministic given the config seed."""
    plant = world.plant
    d = plant.dimension
    if getattr(provider, "dimension", d) != d:
        raise ValueError("provider and world disagree on the parameter dimension")

    root = np.random.SeedSequence(cfg.seed)
    init_ss, eval_ss, iter_ss, final_ss = root.spawn(4)
    init_rng = np.random.default_rng(init_ss)
    eval_seeds = np.random.default_rng(eval_ss).integers(
        0, 2**63 - 1, size=cfg.n_init + cfg.iterations)
    iter_children = iter_ss.spawn(cfg.iterations)

    records: list[IterationRecord] = []
    thetas: list[np.ndarray] = []
    rewards: list[float] = []
    best_y = -np.inf

    def evaluate(theta: np.ndarray, index: int, started: float) -> None:
        nonlocal best_y
        rule = _eval_rule(cfg, provider, theta)
        episode = EpisodeConfig(horizon=cfg.horizon,
                                initial_state=plant.fixed_init,
                                seed=int(eval_seeds[index]))
        y = rollout(world, rule, episode)
        thetas.append(theta)
        rewards.append(y)
        best_y = max(best_y, y)
        records.append(IterationRecord(index=index, theta=theta, y=y,
                                       best_y=best_y,
                                       wall_time=time.perf_counter() - started))

    for j in range(cfg.n_init):
        started = time.perf_counter()
        evaluate(init_rng.uniform(size=d), j, started)

    model = None
    for t in range(cfg.iterations):
        started = time.perf_counter()
        hyper_ss, acq_ss = iter_children[t].spawn(2)
        data = ObservationSet(np.stack(thetas), np.array(rewards))
        model = _fit_surrogate(cfg, data, np.random.default_rng(hyper_ss))
        ctx = AcquisitionContext.from_model(model, cfg.noise_variance, cfg.ut_k)
        objective = make_objective(
            ctx, unscented=cfg.variant is not Variant.STANDARD_BO)
        theta_next = maximize_acquisition(objective, d, cfg.acq_restarts,
                                          np.random.default_rng(acq_ss))
        evaluate(theta_next, cfg.n_init + t, started)

    data = ObservationSet(np.stack(thetas), np.array(rewards))
    final_hyper_ss, final_rff_ss = final_ss.spawn(2)
    final_model = _fit_surrogate(cfg, data, np.random.default_rng(final_hyper_ss))
    theta_star = None
    if cfg.variant in (Variant.UNCAPS, Variant.UNCAPS_GA):
        theta_star = opt_latent_dist(data, cfg.opt_samples, cfg.n_features,
                                     final_model.hyperparams,
                                     np.random.default_rng(final_rff_ss),
                                     restarts=cfg.rff_restarts)

    best = int(np.argmax(rewards))
    if cfg.variant is Variant.STANDARD_BO:
        descriptor = f"plain action at best theta (index {best})"
    elif cfg.variant is Variant.UNCAPS_EP:
        descriptor = (f"unscented action selection at best theta (index {best}, "
                      f"sigma2={cfg.noise_variance})")
    elif cfg.variant is Variant.UNCAPS_GA:
        descriptor = (f"Gaussian-fit unscented action over {len(theta_star)} "
                      f"optimal-parameter samples")
    else:
        descriptor = (f"averaged policy over {len(theta_star)} "
                      f"optimal-parameter samples")
    return SearchTrace(variant=cfg.variant, records=records,
                       theta_star=theta_star, final_descriptor=descriptor,
                       surrogate_hyperparams=final_model.hyperparams)


def final_policy(trace: SearchTrace, provider, cfg: SearchConfig):
    """Assemble the transfer-time action rule for a completed trace."""
    if trace.variant is not cfg.variant:
        raise ValueError(f"trace variant {trace.variant.value} does not match "
                         f"config variant {cfg.variant.value}")
    if cfg.variant is Variant.STANDARD_BO:
        return PlainPolicyRule(provider, trace.best_theta)
    if cfg.variant is Variant.UNCAPS_EP:
        return UASPolicyRule(provider, trace.best_theta, cfg.noise_variance,
                             cfg.ut_k)
    if trace.theta_star is None:
        raise ValueError(f"trace for {cfg.variant.value} carries no "
                         "optimal-parameter samples")
    if cfg.variant is Variant.UNCAPS_GA:
        return GAPolicyRule(provider, trace.theta_star.samples, cfg.ut_k)
    # Full method: averaging linear-feedback actions equals acting with the
    # averaged gain, which rollouts can run through the compiled kernel.
    if isinstance(provider, LQRPolicyProvider):
        return LinearFeedbackRule(provider.mean_gain(trace.theta_star.samples),
                                  provider.s_target)
    return AveragedPolicyRule(provider, trace.theta_star.samples)
