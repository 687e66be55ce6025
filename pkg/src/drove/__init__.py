"""Discretized-action policy learning with generalized folded-concave penalties.

The package estimates how a continuous allocation decision in [0, 1]
should depend on covariates.  Actions are discretized onto a grid, the
outcome model interacts covariates with grid levels, and a structured
penalty simultaneously removes irrelevant effects and fuses adjacent
levels with equal effects.  On top of the fitted model come the induced
decision rule, its estimated value on fresh covariates, and sandwich-based
confidence intervals for values, value differences and coefficient
contrasts.  A simulation laboratory reproduces the supporting Monte-Carlo
experiments.
"""

from .design import (
    ActionGrid,
    InteractionDesign,
    ObservationSet,
    PenaltyMatrix,
    build_design,
    build_penalty_matrix,
    build_policy_features,
    identity_penalty_matrix,
    level_index,
)
from .estimators import (
    ConvergenceError,
    EstimationError,
    EstimatorKind,
    FittedModel,
    TuningResult,
    check_minimal_signal,
    fit,
    fit_glla,
    tune_lambda,
)
from .fixtures import (
    FixtureSummary,
    default_coefficients,
    fixture_grid,
    fixture_penalty_matrix,
    summarize_coefficients,
    true_null_rows,
    validate_fixture,
)
from .inference import (
    ValueEstimate,
    contrast_ci,
    estimate_optimal_value,
    evaluate_rule,
    optimal_policy,
    optimal_q,
    value_difference,
)
from .penalties import PenaltySpec, check_penalty_assumptions, penalty_value, rho_prime
from .simlab import (
    SimConfig,
    generate_dataset,
    run_table1,
    run_table2,
    run_table3,
    true_optimal_value,
    true_rule_value,
)
from .solver import (
    GenlassoSolution,
    SolverSettings,
    objective,
    solve_weighted_genlasso,
)

__version__ = "0.1.0"

__all__ = [
    "ActionGrid",
    "ConvergenceError",
    "EstimationError",
    "EstimatorKind",
    "FittedModel",
    "FixtureSummary",
    "GenlassoSolution",
    "InteractionDesign",
    "ObservationSet",
    "PenaltyMatrix",
    "PenaltySpec",
    "SimConfig",
    "SolverSettings",
    "TuningResult",
    "ValueEstimate",
    "build_design",
    "build_penalty_matrix",
    "build_policy_features",
    "check_minimal_signal",
    "check_penalty_assumptions",
    "contrast_ci",
    "default_coefficients",
    "estimate_optimal_value",
    "evaluate_rule",
    "fit",
    "fit_glla",
    "fixture_grid",
    "fixture_penalty_matrix",
    "generate_dataset",
    "identity_penalty_matrix",
    "level_index",
    "objective",
    "optimal_policy",
    "optimal_q",
    "penalty_value",
    "rho_prime",
    "run_table1",
    "run_table2",
    "run_table3",
    "solve_weighted_genlasso",
    "summarize_coefficients",
    "true_null_rows",
    "true_optimal_value",
    "true_rule_value",
    "tune_lambda",
    "validate_fixture",
    "value_difference",
]
