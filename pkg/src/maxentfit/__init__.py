"""Maximum-entropy reweighting of simulation ensembles.

Minimally reweight an ensemble of black-box simulator runs so that
weighted averages of chosen observables match target observations, with
optional systematic-error priors, a variational rescue when the prior
ensemble lacks support, and baseline methods for comparison.
"""

from .baselines import (
    AbcOptions,
    AbcResult,
    GaussianPosterior,
    LeastSquaresResult,
    bayes_toy_posterior,
    least_squares_fit,
    maxent_toy_posterior,
    rejection_abc,
)
from .core import (
    Ensemble,
    LagrangeState,
    OptimizerOptions,
    Restraint,
    compute_log_weights,
    constraint_residuals,
    effective_sample_size,
    loss_and_gradient,
    solve_lambda,
    weighted_expectation,
)
from .diagnostics import (
    cross_entropy_estimate,
    kde_1d,
    weight_entropy,
    weighted_mean_and_variance,
    weighted_quantile,
    weighted_trajectory_band,
)
from .distributions import (
    DeltaError,
    DiagonalGaussianPrior,
    ErrorPrior,
    GaussianError,
    LaplaceError,
    TiltDomainError,
    TruncatedNormalPrior,
    error_prior_from_config,
    prior_from_config,
)
from .variational import (
    SamplerState,
    VariationalResult,
    importance_correction,
    variational_fit,
    variational_step,
)

__version__ = "0.1.0"

__all__ = [
    "AbcOptions",
    "AbcResult",
    "GaussianPosterior",
    "LeastSquaresResult",
    "bayes_toy_posterior",
    "least_squares_fit",
    "maxent_toy_posterior",
    "rejection_abc",
    "Ensemble",
    "LagrangeState",
    "OptimizerOptions",
    "Restraint",
    "compute_log_weights",
    "constraint_residuals",
    "effective_sample_size",
    "loss_and_gradient",
    "solve_lambda",
    "weighted_expectation",
    "cross_entropy_estimate",
    "kde_1d",
    "weight_entropy",
    "weighted_mean_and_variance",
    "weighted_quantile",
    "weighted_trajectory_band",
    "DeltaError",
    "DiagonalGaussianPrior",
    "ErrorPrior",
    "GaussianError",
    "LaplaceError",
    "TiltDomainError",
    "TruncatedNormalPrior",
    "error_prior_from_config",
    "prior_from_config",
    "SamplerState",
    "VariationalResult",
    "importance_correction",
    "variational_fit",
    "variational_step",
    "__version__",
]
