"""Marketplace payment experimentation in equilibrium.

Simulates a centralized marketplace where suppliers activate against the
supply-demand equilibrium, estimates utility gradients from small symmetric
per-supplier payment perturbations, and optimizes the platform payment by
first-order methods, with an explore-then-exploit global baseline and a
mean-field oracle for regret accounting.
"""

from .market import (
    AllocationCurve,
    BetaContext,
    ChoiceFamily,
    ConstantSurge,
    ContextModel,
    DemandRatioSurge,
    DomainError,
    EarningFunction,
    FixedContext,
    LogNormalOutsideOption,
    MarketConfig,
    RevenueCurve,
    RiskMap,
)
from .equilibrium import (
    ConcavityReport,
    EquilibriumPoint,
    MeanFieldReport,
    NumericalError,
    concavity_diagnostic,
    finite_n_q,
    mean_field_report,
    mean_field_utility,
    solve_mu,
    stein_dq,
)
from .simulator import DayOutcome, SeedSpec, run_day, simulate_queue_allocation
from .inference import (
    DegenerateDesignError,
    GradientEstimate,
    estimate_gradient,
    estimate_marginal_response,
    estimate_utility_gradient,
    estimate_utility_gradient_surge,
)
from .policy import (
    GlobalPolicy,
    OptimizerState,
    OracleResult,
    averaged_payment,
    expected_utility,
    fit_payment_curve,
    global_explore_exploit,
    measured_gradient_bound,
    mirror_descent_step,
    oracle_optimal_payment,
    run_local_learner,
)
from .harness import (
    ComparisonResult,
    ConfigError,
    ExperimentConfig,
    RegretReport,
    emit_curves,
    preset_config,
    run_comparison,
    run_experiment,
    run_global_sweep,
)

__version__ = "0.1.0"

__all__ = [
    "AllocationCurve", "BetaContext", "ChoiceFamily", "ConstantSurge",
    "ContextModel", "DemandRatioSurge", "DomainError", "EarningFunction",
    "FixedContext", "LogNormalOutsideOption", "MarketConfig", "RevenueCurve",
    "RiskMap",
    "ConcavityReport", "EquilibriumPoint", "MeanFieldReport", "NumericalError",
    "concavity_diagnostic", "finite_n_q", "mean_field_report",
    "mean_field_utility", "solve_mu", "stein_dq",
    "DayOutcome", "SeedSpec", "run_day", "simulate_queue_allocation",
    "DegenerateDesignError", "GradientEstimate", "estimate_gradient",
    "estimate_marginal_response", "estimate_utility_gradient",
    "estimate_utility_gradient_surge",
    "GlobalPolicy", "OptimizerState", "OracleResult", "averaged_payment",
    "expected_utility", "fit_payment_curve", "global_explore_exploit",
    "measured_gradient_bound", "mirror_descent_step", "oracle_optimal_payment",
    "run_local_learner",
    "ComparisonResult", "ConfigError", "ExperimentConfig", "RegretReport",
    "emit_curves", "preset_config", "run_comparison", "run_experiment",
    "run_global_sweep",
]
