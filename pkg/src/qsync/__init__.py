"""Wasserstein barycenters of one-dimensional samples.

Estimation of a population barycenter from grouped samples (plain and
kernel-smoothed quantile averaging, plus a parametric location
baseline), exact risk formulas with order-statistic moments, upper
bounds for heavier settings, and a seeded Monte Carlo harness for
convergence experiments.
"""

from .barycenter import (
    BarycenterEstimate,
    GroupedDataset,
    frechet_objective,
    nonsmoothed_barycenter,
    parametric_location_estimate,
    smoothed_barycenter,
)
from .errors import (
    DegenerateSampleError,
    DomainError,
    InvariantViolation,
    ModelError,
    ParseError,
    PrecisionError,
    QsyncError,
    UnsupportedDistributionError,
)
from .measures import (
    AnalyticDistribution,
    AnalyticQuantile,
    EmpiricalMeasure,
    Gaussian,
    GridQuantile,
    OneSidedExponential,
    QuantileFunction,
    StepQuantile,
    TabulatedCdf,
    Uniform,
    as_quantile_function,
    expected_w2_empirical_to_target,
    midpoint_alphas,
    wasserstein2_squared,
)
from .simulation import (
    Deterministic,
    EstimatorSpec,
    LocationScaleGaussian,
    LocationShiftOfBase,
    MeasureModel,
    RiskReport,
    draw_dataset,
    monte_carlo_risk,
    replication_rng,
    risk_grid,
    risk_log_ratios,
)
from .smoothing import (
    BoundaryKernelMeasure,
    CustomKernel,
    GaussianKernel,
    Kernel,
    KernelDensityMeasure,
    SmoothedUnitMeasure,
    least_squares_cv_score,
    select_bandwidth,
    smoothed_unit_measure,
    smoothing_error_bound,
    validate_kernel,
)
from .theory import (
    ExactRiskBreakdown,
    OrderStatMoments,
    RiskBound,
    RiskFormulaInput,
    exact_risk_breakdown,
    exact_risk_equal_p,
    j2_functional,
    order_stat_moments,
    risk_upper_bounds,
)

__version__ = "0.1.0"

__all__ = [
    "AnalyticDistribution",
    "AnalyticQuantile",
    "BarycenterEstimate",
    "BoundaryKernelMeasure",
    "CustomKernel",
    "DegenerateSampleError",
    "Deterministic",
    "DomainError",
    "EmpiricalMeasure",
    "EstimatorSpec",
    "ExactRiskBreakdown",
    "frechet_objective",
    "Gaussian",
    "GaussianKernel",
    "GridQuantile",
    "GroupedDataset",
    "InvariantViolation",
    "j2_functional",
    "Kernel",
    "KernelDensityMeasure",
    "least_squares_cv_score",
    "LocationScaleGaussian",
    "LocationShiftOfBase",
    "MeasureModel",
    "midpoint_alphas",
    "ModelError",
    "monte_carlo_risk",
    "nonsmoothed_barycenter",
    "OneSidedExponential",
    "OrderStatMoments",
    "order_stat_moments",
    "parametric_location_estimate",
    "ParseError",
    "PrecisionError",
    "QsyncError",
    "QuantileFunction",
    "replication_rng",
    "RiskBound",
    "RiskFormulaInput",
    "risk_grid",
    "risk_log_ratios",
    "RiskReport",
    "select_bandwidth",
    "smoothed_barycenter",
    "smoothed_unit_measure",
    "SmoothedUnitMeasure",
    "smoothing_error_bound",
    "StepQuantile",
    "TabulatedCdf",
    "UnsupportedDistributionError",
    "Uniform",
    "validate_kernel",
    "wasserstein2_squared",
    "as_quantile_function",
    "draw_dataset",
    "exact_risk_breakdown",
    "exact_risk_equal_p",
    "expected_w2_empirical_to_target",
    "risk_upper_bounds",
]
