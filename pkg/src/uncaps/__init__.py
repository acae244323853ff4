"""Uncertainty-aware sim2real policy search on a toy continuous-control testbed.

Bayesian optimisation over normalized simulation parameters drives a library
of exact parameter-conditioned policies; environment noise enters the search
through unscented expected improvement and unscented action selection, and
estimation uncertainty through random-Fourier-feature posterior sampling of
plausibly-optimal parameters.
"""

__version__ = "0.1.0"

from .acquisition import (AcquisitionContext, expected_improvement,
                          maximize_acquisition, unscented_ei)
from .baselines import DRConfig, dr_policy
from .env import (EpisodeConfig, PlantSpec, RealWorldSpec, SimulatedWorld,
                  jumpstart_eval, mass_spring_damper, real_step, rollout,
                  sim_step)
from .exceptions import NumericalError, OptimizationError
from .gp import GPHyperparams, GPModel, ObservationSet, fit, fit_optimized, rbf_kernel
from .policy import (LQRPolicyProvider, averaged_policy_action, ga_action,
                     uas_action)
from .rff import (LinearGPSample, OptimalParamSet, RFFMap, features,
                  opt_latent_dist, sample_posterior_weights, sample_rff_map)
from .search import (SearchConfig, SearchTrace, Variant, final_policy,
                     parse_variant, policy_search)
from .unscented import SigmaPointSet, UTConfig, sigma_points, unscented_mean

__all__ = [
    "AcquisitionContext", "DRConfig", "EpisodeConfig", "GPHyperparams",
    "GPModel", "LinearGPSample", "LQRPolicyProvider", "NumericalError",
    "ObservationSet", "OptimalParamSet", "OptimizationError", "PlantSpec",
    "RealWorldSpec", "RFFMap", "SearchConfig", "SearchTrace", "SigmaPointSet",
    "SimulatedWorld", "UTConfig", "Variant", "averaged_policy_action",
    "dr_policy", "expected_improvement", "features", "final_policy", "fit",
    "fit_optimized", "ga_action", "jumpstart_eval", "mass_spring_damper",
    "maximize_acquisition", "opt_latent_dist", "parse_variant",
    "policy_search", "rbf_kernel", "real_step", "rollout",
    "sample_posterior_weights", "sample_rff_map", "sigma_points", "sim_step",
    "uas_action", "unscented_ei", "unscented_mean",
]
