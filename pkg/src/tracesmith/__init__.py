"""Differentially private location-trace synthesis with budget-weight optimization."""

from tracesmith.data import (
    Dataset,
    EmptyDatasetError,
    Point,
    Rect,
    Trace,
    TraceParseError,
    bounding_box,
    generate_toy_dataset,
    parse_dataset,
    serialize_dataset,
)
from tracesmith.bayesopt import (
    Observation,
    OptimizationState,
    OptimizerConfig,
    evaluate_objective,
    expected_improvement,
    gp_fit,
    optimize,
    to_simplex,
)
from tracesmith.dp import (
    BudgetAllocation,
    BudgetError,
    BudgetWeights,
    PrivacyLedger,
    laplace_noise,
    split_budget,
)
from tracesmith.generator import synthesize_dataset
from tracesmith.metrics import (
    MetricConfig,
    MetricReport,
    evaluate_all,
    jsd,
    register_metric,
)
from tracesmith.runner import optimize_run, synthesize_run
from tracesmith.synopsis import AdaptiveGrid, Synopsis, build_synopsis

__all__ = [
    "AdaptiveGrid",
    "BudgetAllocation",
    "BudgetError",
    "BudgetWeights",
    "Dataset",
    "EmptyDatasetError",
    "MetricConfig",
    "MetricReport",
    "Observation",
    "OptimizationState",
    "OptimizerConfig",
    "Point",
    "PrivacyLedger",
    "Rect",
    "Synopsis",
    "Trace",
    "TraceParseError",
    "bounding_box",
    "build_synopsis",
    "evaluate_all",
    "evaluate_objective",
    "expected_improvement",
    "generate_toy_dataset",
    "gp_fit",
    "jsd",
    "laplace_noise",
    "optimize",
    "optimize_run",
    "parse_dataset",
    "register_metric",
    "serialize_dataset",
    "split_budget",
    "synthesize_dataset",
    "synthesize_run",
    "to_simplex",
]
