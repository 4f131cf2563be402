"""Error metrics comparing a synthetic trace dataset against the original.

All metrics are functions (real, synthetic) -> non-negative real, zero when
the datasets agree. The divergence-based metrics are bounded by 1.
"""

from __future__ import annotations

import heapq
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from tracesmith.data import Dataset, EmptyDatasetError, Rect, bounding_box
from tracesmith.synopsis import AdaptiveGrid, cell_sequences, trip_pairs, uniform_grid


class MetricError(ValueError):
    """A metric was misconfigured or cannot be computed on the given inputs."""


@dataclass(frozen=True)
class RangeQuery:
    rect: Rect


@dataclass(frozen=True)
class MetricConfig:
    """Evaluation constants; defaults match the built-in benchmark settings."""

    n_queries: int = 200
    query_seed: int = 0
    sanity_fraction: float = 0.01
    pattern_k: int = 100
    pattern_len_min: int = 2
    pattern_len_max: int = 8
    pattern_grid_n: int = 8
    trip_grid_n: int = 6
    distance_buckets: int = 20


@dataclass
class MetricReport:
    query_error: float
    pattern_support_error: float
    trip_error: float
    travel_distance_error: float
    custom: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "query_error": self.query_error,
            "pattern_support_error": self.pattern_support_error,
            "trip_error": self.trip_error,
            "travel_distance_error": self.travel_distance_error,
            "custom": dict(self.custom),
        }


def jsd(p, q) -> float:
    """Jensen-Shannon divergence with base-2 logarithm; bounded in [0, 1]."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise MetricError(f"mismatched pmf supports: {p.shape} vs {q.shape}")
    for name, pmf in (("p", p), ("q", q)):
        total = float(pmf.sum())
        if abs(total - 1.0) > 1e-6:
            raise MetricError(f"{name} sums to {total}, expected 1 within 1e-6")
        if (pmf < 0).any():
            raise MetricError(f"{name} has negative entries")
    m = 0.5 * (p + q)

    def half_kl(a):
        mask = a > 0
        return float((a[mask] * np.log2(a[mask] / m[mask])).sum())

    return min(1.0, max(0.0, 0.5 * half_kl(p) + 0.5 * half_kl(q)))


def generate_query_workload(region: Rect, count: int, seed: int) -> list[RangeQuery]:
    """Random rectangles with sides 10-30% of the region's, placed fully inside."""
    if count < 1:
        raise MetricError(f"workload size must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    queries = []
    for _ in range(count):
        w = rng.uniform(0.1, 0.3) * region.width
        h = rng.uniform(0.1, 0.3) * region.height
        x0 = rng.uniform(region.min_x, region.max_x - w)
        y0 = rng.uniform(region.min_y, region.max_y - h)
        queries.append(RangeQuery(Rect(x0, y0, x0 + w, y0 + h)))
    return queries


def count_passing(dataset: Dataset, rect: Rect) -> int:
    """Number of traces with at least one point inside the rectangle."""
    pts = dataset.point_array
    inside = (
        (pts[:, 0] >= rect.min_x)
        & (pts[:, 0] <= rect.max_x)
        & (pts[:, 1] >= rect.min_y)
        & (pts[:, 1] <= rect.max_y)
    )
    if not inside.any():
        return 0
    offsets = dataset.trace_offsets
    trace_ids = np.repeat(np.arange(dataset.cardinality), np.diff(offsets))
    return int(np.unique(trace_ids[inside]).size)


def query_error(
    dataset: Dataset,
    synthetic: Dataset,
    workload: list[RangeQuery],
    sanity_bound: Optional[float] = None,
) -> float:
    """Mean relative count error over the workload, denominator floored at the
    sanity bound (default 1% of the real cardinality)."""
    _require_nonempty(dataset, synthetic)
    if not workload:
        raise MetricError("query workload is empty")
    if sanity_bound is None:
        sanity_bound = 0.01 * dataset.cardinality
    errors = []
    for query in workload:
        real = count_passing(dataset, query.rect)
        syn = count_passing(synthetic, query.rect)
        errors.append(abs(real - syn) / max(real, sanity_bound))
    return float(np.mean(errors))


def mine_top_k_patterns(
    dataset: Dataset,
    grid: AdaptiveGrid,
    k: int,
    len_min: int = 2,
    len_max: int = 8,
) -> list[tuple[tuple[int, ...], int]]:
    """Top-k contiguous cell patterns by trace support.

    Support counts each trace at most once. Ties break toward higher support,
    then shorter patterns, then lexicographic cell order.
    """
    if k < 1:
        raise MetricError(f"k must be >= 1, got {k}")
    if not (2 <= len_min <= len_max):
        raise MetricError(f"invalid pattern length bounds [{len_min}, {len_max}]")
    support = _pattern_supports(cell_sequences(dataset, grid), len_min, len_max)
    ranked = heapq.nsmallest(
        k, support.items(), key=lambda item: (-item[1], len(item[0]), item[0])
    )
    return [(pattern, count) for pattern, count in ranked]


def _pattern_supports(sequences, len_min: int, len_max: int) -> Counter:
    support: Counter = Counter()
    for seq in sequences:
        seq = tuple(int(c) for c in seq)
        seen = set()
        for size in range(len_min, min(len_max, len(seq)) + 1):
            for i in range(len(seq) - size + 1):
                seen.add(seq[i : i + size])
        support.update(seen)
    return support


def pattern_support_error(
    dataset: Dataset,
    synthetic: Dataset,
    grid: Optional[AdaptiveGrid] = None,
    k: int = 100,
    len_min: int = 2,
    len_max: int = 8,
    grid_n: int = 8,
) -> float:
    """Average relative support error of the real dataset's top-k patterns."""
    _require_nonempty(dataset, synthetic)
    if grid is None:
        grid = uniform_grid(bounding_box(dataset), grid_n)
    mined = mine_top_k_patterns(dataset, grid, k, len_min, len_max)
    if not mined:
        raise MetricError("the real dataset yields no patterns to mine")
    lengths = {len(p) for p, _ in mined}
    syn_support = _pattern_supports(
        cell_sequences(synthetic, grid), min(lengths), max(lengths)
    )
    total = 0.0
    for pattern, real_support in mined:
        total += abs(real_support - syn_support.get(pattern, 0)) / real_support
    return total / len(mined)


def trip_pair_pmf(dataset: Dataset, grid: AdaptiveGrid) -> np.ndarray:
    """Distribution of (start cell, end cell) pairs as a flat length-C^2 pmf."""
    pairs = trip_pairs(dataset, grid)
    keys = pairs[:, 0] * grid.n_cells + pairs[:, 1]
    counts = np.bincount(keys, minlength=grid.n_cells * grid.n_cells).astype(float)
    return counts / counts.sum()


def trip_error(dataset: Dataset, synthetic: Dataset, grid_n: int = 6) -> float:
    """Divergence between trip distributions on a shared uniform grid."""
    _require_nonempty(dataset, synthetic)
    grid = uniform_grid(bounding_box(dataset), grid_n)
    return jsd(trip_pair_pmf(dataset, grid), trip_pair_pmf(synthetic, grid))


def travel_distances(dataset: Dataset) -> np.ndarray:
    """Per-trace sum of consecutive point-to-point Euclidean distances."""
    pts = dataset.point_array
    offsets = dataset.trace_offsets
    step = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    # Steps that cross a trace boundary do not belong to any trace.
    step_trace = np.repeat(np.arange(dataset.cardinality), np.diff(offsets) - 1)
    valid = np.ones(len(step), dtype=bool)
    valid[offsets[1:-1] - 1] = False
    return np.bincount(step_trace, weights=step[valid], minlength=dataset.cardinality)


def distance_histograms(
    dataset: Dataset, synthetic: Dataset, buckets: int = 20
) -> tuple[np.ndarray, np.ndarray, float]:
    """Bucketed travel-distance counts; width set by the real dataset's maximum."""
    real = travel_distances(dataset)
    syn = travel_distances(synthetic)
    width = float(real.max()) / buckets
    if width == 0.0:
        real_idx = np.zeros(len(real), dtype=int)
        syn_idx = np.where(syn > 0.0, buckets - 1, 0)
    else:
        real_idx = np.minimum((real / width).astype(int), buckets - 1)
        syn_idx = np.minimum((syn / width).astype(int), buckets - 1)
    real_hist = np.bincount(real_idx, minlength=buckets).astype(float)
    syn_hist = np.bincount(syn_idx, minlength=buckets).astype(float)
    return real_hist, syn_hist, width


def travel_distance_error(dataset: Dataset, synthetic: Dataset, buckets: int = 20) -> float:
    _require_nonempty(dataset, synthetic)
    real_hist, syn_hist, _ = distance_histograms(dataset, synthetic, buckets)
    return jsd(real_hist / real_hist.sum(), syn_hist / syn_hist.sum())


def spatial_histogram(dataset: Dataset, region: Rect, bins: int) -> np.ndarray:
    """Point counts over a bins x bins grid; row 0 is the lowest y band."""
    grid = uniform_grid(region, bins)
    pts = dataset.point_array
    cells = grid.locate_xy(pts[:, 0], pts[:, 1])
    return np.bincount(cells, minlength=bins * bins).reshape(bins, bins)


# --- metric registry ---------------------------------------------------------

MetricFn = Callable[[Dataset, Dataset, MetricConfig], float]

_CUSTOM_METRICS: dict[str, MetricFn] = {}


def _query_metric(d: Dataset, syn: Dataset, config: MetricConfig) -> float:
    workload = generate_query_workload(bounding_box(d), config.n_queries, config.query_seed)
    return query_error(d, syn, workload, sanity_bound=config.sanity_fraction * d.cardinality)


def _pattern_metric(d: Dataset, syn: Dataset, config: MetricConfig) -> float:
    return pattern_support_error(
        d,
        syn,
        k=config.pattern_k,
        len_min=config.pattern_len_min,
        len_max=config.pattern_len_max,
        grid_n=config.pattern_grid_n,
    )


def _trip_metric(d: Dataset, syn: Dataset, config: MetricConfig) -> float:
    return trip_error(d, syn, grid_n=config.trip_grid_n)


def _distance_metric(d: Dataset, syn: Dataset, config: MetricConfig) -> float:
    return travel_distance_error(d, syn, buckets=config.distance_buckets)


BUILTIN_METRICS: dict[str, MetricFn] = {
    "query": _query_metric,
    "pattern": _pattern_metric,
    "trip": _trip_metric,
    "distance": _distance_metric,
}


def register_metric(name: str, fn: MetricFn) -> None:
    """Register a custom metric under a new name."""
    if name in BUILTIN_METRICS:
        raise MetricError(f"cannot shadow built-in metric {name!r}")
    _CUSTOM_METRICS[name] = fn


def unregister_metric(name: str) -> None:
    _CUSTOM_METRICS.pop(name, None)


def metric_names() -> list[str]:
    return sorted(BUILTIN_METRICS) + sorted(_CUSTOM_METRICS)


def resolve_metric(name: str) -> MetricFn:
    if name in BUILTIN_METRICS:
        return BUILTIN_METRICS[name]
    if name in _CUSTOM_METRICS:
        return _CUSTOM_METRICS[name]
    raise MetricError(f"unknown metric {name!r}; valid names: {', '.join(metric_names())}")


def evaluate_all(
    dataset: Dataset, synthetic: Dataset, config: MetricConfig = MetricConfig()
) -> MetricReport:
    """All four built-in metrics plus every registered custom metric."""
    _require_nonempty(dataset, synthetic)
    values = {}
    for name, fn in BUILTIN_METRICS.items():
        try:
            values[name] = fn(dataset, synthetic, config)
        except MetricError as exc:
            raise MetricError(f"metric {name!r} failed: {exc}") from exc
    custom = {}
    for name, fn in _CUSTOM_METRICS.items():
        try:
            custom[name] = float(fn(dataset, synthetic, config))
        except Exception as exc:
            raise MetricError(f"custom metric {name!r} failed: {exc}") from exc
    return MetricReport(
        query_error=values["query"],
        pattern_support_error=values["pattern"],
        trip_error=values["trip"],
        travel_distance_error=values["distance"],
        custom=custom,
    )


def _require_nonempty(*datasets: Dataset) -> None:
    for d in datasets:
        if d.cardinality == 0:
            raise EmptyDatasetError("metrics require non-empty datasets")


__all__ = [
    "MetricConfig",
    "MetricError",
    "MetricReport",
    "RangeQuery",
    "BUILTIN_METRICS",
    "count_passing",
    "distance_histograms",
    "evaluate_all",
    "generate_query_workload",
    "jsd",
    "metric_names",
    "mine_top_k_patterns",
    "pattern_support_error",
    "query_error",
    "register_metric",
    "resolve_metric",
    "spatial_histogram",
    "travel_distance_error",
    "travel_distances",
    "trip_error",
    "trip_pair_pmf",
    "unregister_metric",
]
