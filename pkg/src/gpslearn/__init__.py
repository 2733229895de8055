"""Guided policy search with locally fitted linear-Gaussian dynamics."""

from .errors import (
    ConfigError,
    DimensionError,
    EnvironmentFault,
    GpsError,
    IllConditionedError,
    TrainingDivergence,
)
from .lingauss import (
    Gaussian,
    GaussianMarginals,
    LinearDynamicsModel,
    QuadraticCostExpansion,
    TvlgController,
    backward_pass,
    dgd_solve,
    expected_cost,
    forward_marginals,
    traj_kl,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DimensionError",
    "EnvironmentFault",
    "GpsError",
    "IllConditionedError",
    "TrainingDivergence",
    "Gaussian",
    "GaussianMarginals",
    "LinearDynamicsModel",
    "QuadraticCostExpansion",
    "TvlgController",
    "backward_pass",
    "dgd_solve",
    "expected_cost",
    "forward_marginals",
    "traj_kl",
]
