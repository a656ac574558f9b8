"""Controlled variable selection with knockoffs.

Gaussian and residual-permutation knockoff samplers, lasso
coefficient-difference statistics with FDR-calibrated selection, and
diagnostics that audit whether a knockoff copy is actually exchangeable
with the data it shadows.
"""

__version__ = "0.1.0"

from .covariance import (
    CovarianceEstimate,
    alpha_grid_select,
    empirical_covariance,
    graphical_lasso,
    ledoit_wolf,
)
from .diagnostics import (
    C2STReport,
    ClassifierConfig,
    PairingReport,
    c2st,
    c2st_pvalue,
    pairing_check,
)
from .errors import (
    ContractViolationError,
    ConvergenceWarning,
    DegenerateInputError,
    KnockforgeError,
    NonPsdError,
    NumericalFailureError,
    PsdRepairWarning,
    SmallSampleWarning,
)
from .gaussian_knockoffs import (
    GaussianKnockoffSampler,
    build_sampler,
    equicorrelated_s,
    sample_knockoffs,
)
from .inference import (
    KnockoffStatistics,
    SelectionResult,
    bh_select,
    fdp,
    knockoff_select,
    knockoff_threshold,
    lcd_statistics,
    pi_statistics,
    power,
)
from .nonparametric_knockoffs import (
    KNOCKOFF_METHODS,
    KnockoffPair,
    LassoColumnLearner,
    crossfit_knockoffs,
    parallel_cross_covariance,
    parallel_knockoffs,
    permute_residuals,
    sequential_knockoffs,
)
from .regression import (
    LassoFit,
    LinearClassifierFit,
    classifier_fit,
    classifier_predict,
    default_lambda,
    lambda_max,
    lasso_fit,
    lasso_kkt_violation,
)
from .simulation import (
    BENCHMARK_CSV_HEADER,
    GAUSSIAN_COV_OPTIONS,
    NONPARAMETRIC_METHODS,
    BenchmarkRow,
    BenchmarkTable,
    SimulationConfig,
    SimulationTruth,
    draw_support,
    expand_method_specs,
    generate_design,
    generate_response,
    oracle_covariance,
    run_benchmark,
    run_w_sweep,
    shuffle_pairings,
)

__all__ = [
    "__version__",
    # errors
    "KnockforgeError",
    "ContractViolationError",
    "DegenerateInputError",
    "NumericalFailureError",
    "NonPsdError",
    "ConvergenceWarning",
    "PsdRepairWarning",
    "SmallSampleWarning",
    # regression
    "LassoFit",
    "LinearClassifierFit",
    "lambda_max",
    "default_lambda",
    "lasso_fit",
    "lasso_kkt_violation",
    "classifier_fit",
    "classifier_predict",
    # covariance
    "CovarianceEstimate",
    "empirical_covariance",
    "ledoit_wolf",
    "graphical_lasso",
    "alpha_grid_select",
    # gaussian knockoffs
    "GaussianKnockoffSampler",
    "equicorrelated_s",
    "build_sampler",
    "sample_knockoffs",
    # nonparametric knockoffs
    "KNOCKOFF_METHODS",
    "KnockoffPair",
    "LassoColumnLearner",
    "permute_residuals",
    "sequential_knockoffs",
    "parallel_knockoffs",
    "crossfit_knockoffs",
    "parallel_cross_covariance",
    # inference
    "KnockoffStatistics",
    "SelectionResult",
    "lcd_statistics",
    "knockoff_threshold",
    "knockoff_select",
    "pi_statistics",
    "bh_select",
    "fdp",
    "power",
    # diagnostics
    "C2STReport",
    "PairingReport",
    "ClassifierConfig",
    "c2st",
    "c2st_pvalue",
    "pairing_check",
    # simulation
    "SimulationConfig",
    "SimulationTruth",
    "BenchmarkRow",
    "BenchmarkTable",
    "BENCHMARK_CSV_HEADER",
    "GAUSSIAN_COV_OPTIONS",
    "NONPARAMETRIC_METHODS",
    "generate_design",
    "oracle_covariance",
    "draw_support",
    "generate_response",
    "shuffle_pairings",
    "expand_method_specs",
    "run_benchmark",
    "run_w_sweep",
]
