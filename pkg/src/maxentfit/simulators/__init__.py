"""Built-in forward models used by the demo experiments."""

from .gravity import (
    GravityConfig,
    GravityParams,
    default_observation_steps,
    gravity_observables,
    gravity_trajectory_to_csv,
    simulate_gravity,
    simulate_gravity_ensemble,
)
from .noise import synthesize_observations
from .seair import (
    COMPARTMENTS,
    SeairConfig,
    SeairParams,
    SeairTrajectory,
    make_mobility_matrix,
    seair_observables,
    seair_trajectory_to_csv,
    simulate_seair,
    simulate_seair_ensemble,
)

__all__ = [
    "GravityConfig",
    "GravityParams",
    "default_observation_steps",
    "gravity_observables",
    "gravity_trajectory_to_csv",
    "simulate_gravity",
    "simulate_gravity_ensemble",
    "synthesize_observations",
    "COMPARTMENTS",
    "SeairConfig",
    "SeairParams",
    "SeairTrajectory",
    "make_mobility_matrix",
    "seair_observables",
    "seair_trajectory_to_csv",
    "simulate_seair",
    "simulate_seair_ensemble",
]
