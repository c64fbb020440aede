"""Discrete-time JSQ load-balancing simulator and verification harness."""

from .model import (
    DEFAULT_SEED,
    DiscreteDist,
    InfeasibleVarianceError,
    InvariantViolation,
    ParameterError,
    Policy,
    QueueState,
    SimConfig,
    StepRecord,
    debug_run,
    drift_from_alpha,
    lam_from_alpha,
    make_arrival_dist,
    make_service_dist,
    replication_rng,
    route,
    sample_dist,
    simulate_chunk,
    step,
)
from .projection import Decomposition, decompose, p_norm, perp_moment_estimate
from .estimate import (
    Estimate,
    EstimatorSpec,
    MergeError,
    OracleError,
    OracleResult,
    RunSummary,
    default_estimator_spec,
    merge_replications,
    oracle_stationary,
    run_replication,
)
from .stats import (
    THETA_GRID,
    TheoryTargets,
    batch_means,
    empirical_mgf,
    exp_qq_data,
    k_r_bound,
    loglog_slope,
    stein_bound_rhs,
    theory_targets,
    wasserstein1_to_exp,
)

__version__ = "0.1.0"
