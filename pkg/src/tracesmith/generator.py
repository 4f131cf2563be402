"""Synthetic trace generation from a Synopsis: trip, length, constrained walk.

Generation reads only the Synopsis bundle. It never touches the original
dataset, so the privacy guarantee of the bundle carries over unchanged.

Every synthetic trace holds exactly one trip. Chaining consecutive trips
(reusing a trip's end cell as the next trip's start) would be a natural
extension but is not implemented.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tracesmith.data import Dataset, Point, Trace
from tracesmith.synopsis import (
    AdaptiveGrid,
    CellId,
    LengthDistribution,
    MarkovModel,
    MIN_LENGTH,
    Synopsis,
    TripDistribution,
    LENGTH_SUPPORT,
)

# How many times a trip length is redrawn before giving up on bridging.
RESAMPLE_ATTEMPTS = 5


@dataclass(frozen=True)
class WalkPlan:
    start: CellId
    end: CellId
    length: int

    def __post_init__(self):
        if self.length < MIN_LENGTH:
            raise ValueError(f"walk length must be >= {MIN_LENGTH}, got {self.length}")


class ReachabilityTable:
    """Cached powers of the transition matrix, grown on demand.

    power(k) is the k-step transition matrix; its (i, j) entry is the
    probability of reaching j from i in exactly k steps.
    """

    def __init__(self, markov: MarkovModel):
        self._powers = [markov.transition]
        self._columns: dict[tuple[int, CellId], np.ndarray] = {}

    def power(self, k: int) -> np.ndarray:
        if k < 1:
            raise ValueError(f"power must be >= 1, got {k}")
        while len(self._powers) < k:
            self._powers.append(self._powers[-1] @ self._powers[0])
        return self._powers[k - 1]

    def column(self, k: int, end: CellId) -> np.ndarray:
        """Contiguous copy of power(k)[:, end]; cached for the walk hot path."""
        key = (k, end)
        col = self._columns.get(key)
        if col is None:
            col = np.ascontiguousarray(self.power(k)[:, end])
            self._columns[key] = col
        return col

    def bridge_mass(self, start: CellId, end: CellId, length: int) -> float:
        """Probability of an unconstrained walk going start -> end in length-1 steps."""
        if length == MIN_LENGTH:
            return 1.0  # [start, end] is emitted directly, no stepping involved
        return float(self.power(length - 1)[start, end])


def _sample_index(cdf: np.ndarray, rng) -> int:
    return int(cdf.searchsorted(rng.random(), side="right"))


def sample_trip(trips: TripDistribution, rng) -> tuple[CellId, CellId]:
    """Inverse-CDF draw over the fixed pair ordering."""
    return trips.pairs[_sample_index(trips.cdf, rng)]


def sample_length(dist: LengthDistribution, rng) -> int:
    return int(LENGTH_SUPPORT[_sample_index(dist.cdf, rng)])


def constrained_walk(
    markov: MarkovModel, table: ReachabilityTable, plan: WalkPlan, rng
) -> np.ndarray:
    """Walk of exactly plan.length cells from plan.start to plan.end.

    Interior cells are sampled proportionally to the one-step transition
    weighted by the probability of still reaching the endpoint in the
    remaining steps. If that weight vector vanishes, the walk degrades to an
    unconstrained walk with the endpoint forced.
    """
    length = plan.length
    cells = np.empty(length, dtype=np.int64)
    cells[0] = plan.start
    cells[-1] = plan.end
    if length == 2:
        return cells

    transition = markov.transition
    cur = plan.start
    for pos in range(1, length - 1):
        remaining = length - 1 - pos  # steps still needed after the cell chosen now
        cum = np.cumsum(transition[cur] * table.column(remaining, plan.end))
        total = cum[-1]
        if total <= 0.0:
            return _fallback_walk(markov, plan, rng)
        cells[pos] = cur = int(cum.searchsorted(rng.random() * total, side="right"))
    return cells


def _fallback_walk(markov: MarkovModel, plan: WalkPlan, rng) -> np.ndarray:
    """Unconstrained interior walk with the endpoint forced."""
    cells = np.empty(plan.length, dtype=np.int64)
    cells[0] = cur = plan.start
    for pos in range(1, plan.length - 1):
        cells[pos] = cur = _sample_index(np.cumsum(markov.transition[cur]), rng)
    cells[-1] = plan.end
    return cells


def cell_to_point(grid: AdaptiveGrid, cell: CellId, rng) -> Point:
    """Uniform draw inside the cell's rectangle."""
    rect = grid.cell_rect(cell)
    return Point(
        rect.min_x + rng.random() * rect.width,
        rect.min_y + rng.random() * rect.height,
    )


def _points_for_cells(grid: AdaptiveGrid, cells: np.ndarray, rng) -> tuple[Point, ...]:
    """Uniform draw inside each cell's rectangle, batched over the walk."""
    x0, y0, w, h = grid.cell_bounds
    u = rng.random((len(cells), 2))
    xs = x0[cells] + u[:, 0] * w[cells]
    ys = y0[cells] + u[:, 1] * h[cells]
    return tuple(Point(float(x), float(y)) for x, y in zip(xs, ys))


def synthesize_trace(synopsis: Synopsis, table: ReachabilityTable, rng) -> Trace:
    start, end = sample_trip(synopsis.trips, rng)
    dist = synopsis.lengths[(start, end)]
    length = sample_length(dist, rng)
    for _ in range(RESAMPLE_ATTEMPTS):
        if table.bridge_mass(start, end, length) > 0.0:
            break
        length = sample_length(dist, rng)
    cells = constrained_walk(synopsis.markov, table, WalkPlan(start, end, length), rng)
    return Trace(_points_for_cells(synopsis.grid, cells, rng))


def synthesize_dataset(synopsis: Synopsis, n: int, rng) -> Dataset:
    """Generate n synthetic traces from the bundle alone.

    Each trace draws from its own stream derived from the caller's source, so
    the output is independent of generation order.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    table = ReachabilityTable(synopsis.markov)
    streams = rng.spawn(n)
    return Dataset(tuple(synthesize_trace(synopsis, table, stream) for stream in streams))
