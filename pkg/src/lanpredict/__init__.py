"""Simulation and verification of efficient plug-in prediction for a bivariate OU process."""

from .core import (
    ParamTheta,
    efficiency_bound,
    fisher_info,
    moment_MVM,
    q_of_theta,
    qer_limit_given_V,
    regression,
    regression_jacobian,
    stationary_cov,
    transition,
    xi_fisher_inv,
)
from .errors import DomainError, EstimationError, GridError, ParameterDomainError
from .estimate import (
    MleResult,
    SufficientStats,
    lan_score,
    log_likelihood,
    mle_decoupled,
    mle_newton,
    subpath,
    sufficient_stats,
)
from .risk import ExperimentConfig, RiskEstimate, convergence_study, run_replications
from .simulate import PathGrid, RngStream, SamplePath, simulate_euler, simulate_exact

__version__ = "0.1.0"
