"""High-level pipeline runs shared by the CLI and the HTTP service."""

from __future__ import annotations

from typing import Optional

import numpy as np

from tracesmith.bayesopt import OptimizationState, OptimizerConfig, ProgressSink, optimize
from tracesmith.data import Dataset
from tracesmith.dp import BudgetWeights, PrivacyLedger, split_budget
from tracesmith.generator import synthesize_dataset
from tracesmith.metrics import MetricConfig, MetricReport, evaluate_all
from tracesmith.synopsis import build_synopsis

# Stream tag for the final clean synthesis, distinct from optimization trials.
FINAL_RUN_TAG = 0x5EED


def synthesize_run(
    dataset: Dataset,
    epsilon: float,
    weights: BudgetWeights,
    grid_n: int,
    rng,
    ledger: Optional[PrivacyLedger] = None,
    label: str = "synthesis",
) -> Dataset:
    """One clean pipeline run: budget split, synopsis build, generation."""
    allocation = split_budget(epsilon, weights)
    synopsis = build_synopsis(dataset, allocation, grid_n, rng)
    if ledger is not None:
        ledger.record(label, epsilon)
    return synthesize_dataset(synopsis, dataset.cardinality, rng)


def final_rng(seed: int) -> np.random.Generator:
    """Fresh stream for the released dataset, disjoint from optimization trials."""
    return np.random.default_rng(np.random.SeedSequence((seed, FINAL_RUN_TAG)))


def optimize_run(
    dataset: Dataset,
    epsilon: float,
    metric: str,
    config: OptimizerConfig,
    *,
    grid_n: int = 4,
    metric_config: MetricConfig = MetricConfig(),
    progress_sink: Optional[ProgressSink] = None,
) -> tuple[OptimizationState, Dataset, MetricReport, PrivacyLedger]:
    """Full optimization plus a clean final synthesis at the best weights.

    The released dataset is regenerated with a fresh stream so its provenance
    is a single run at the full budget; the ledger keeps the composed total.
    """
    ledger = PrivacyLedger()
    state = optimize(
        dataset,
        epsilon,
        metric,
        config,
        np.random.default_rng(config.seed),
        progress_sink,
        grid_n=grid_n,
        metric_config=metric_config,
        ledger=ledger,
    )
    synthetic = synthesize_run(
        dataset,
        epsilon,
        state.best.weights,
        grid_n,
        final_rng(config.seed),
        ledger,
        label="final synthesis",
    )
    report = evaluate_all(dataset, synthetic, metric_config)
    return state, synthetic, report, ledger


def result_document(
    spec: dict,
    state: OptimizationState,
    report: MetricReport,
    ledger: PrivacyLedger,
    synthetic_ref: str = "synthetic.txt",
) -> dict:
    """The serializable record of a completed optimization run."""
    ledger_doc = ledger.to_dict()
    ledger_doc["released_epsilon"] = spec.get("epsilon")
    return {
        "spec": spec,
        "best_weights": list(state.best.weights.as_tuple()),
        "best_error": state.best.error,
        "metric": spec.get("metric"),
        "report": report.to_dict(),
        "synthetic": synthetic_ref,
        "observations": [obs.to_dict() for obs in state.observations],
        "failures": state.failures,
        "ledger": ledger_doc,
    }
