"""The four noise-protected features extracted from a trace dataset.

A Synopsis bundles a density-aware grid, an order-1 Markov mobility model,
a trip (start cell, end cell) distribution, and per-trip length
distributions. Once built, synthesis needs only this bundle, never the
original dataset.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import gammaln

from tracesmith.data import Dataset, EmptyDatasetError, Point, Rect, bounding_box
from tracesmith.dp import BudgetAllocation, PrivacyLedger, laplace_noise

# Type alias: cells are indices into the grid's flat cell list.
CellId = int

SUBDIVISION_CAP = 8
DENSITY_SCALE = 10.0  # c in the subdivision rule
LENGTH_CAP = 30  # L_max: lengths are clipped here for the length feature only
MIN_LENGTH = 2

LENGTH_SUPPORT = np.arange(MIN_LENGTH, LENGTH_CAP + 1)


@dataclass(frozen=True)
class AdaptiveGrid:
    """Two-level grid: an N x N top level, each top cell split M x M by density.

    Cells are indexed flat: top cells in row-major order (y outer, x inner),
    each immediately followed by its own M x M subcells in the same order.
    Cell geometry is half-open with the region's max edges closed.
    """

    region: Rect
    top_n: int
    subdivisions: tuple[int, ...]
    top_densities: tuple[float, ...] = ()

    def __post_init__(self):
        if self.top_n < 1:
            raise ValueError(f"top_n must be >= 1, got {self.top_n}")
        if len(self.subdivisions) != self.top_n * self.top_n:
            raise ValueError("need one subdivision count per top-level cell")
        if any(m < 1 for m in self.subdivisions):
            raise ValueError("subdivision counts must be >= 1")

    @cached_property
    def _offsets(self) -> np.ndarray:
        sizes = np.array([m * m for m in self.subdivisions])
        return np.concatenate(([0], np.cumsum(sizes)))

    @cached_property
    def _subdivision_array(self) -> np.ndarray:
        return np.array(self.subdivisions)

    @property
    def n_cells(self) -> int:
        return int(self._offsets[-1])

    @cached_property
    def cell_bounds(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Per-cell (x0, y0, width, height) arrays aligned with cell indices."""
        x0 = np.empty(self.n_cells)
        y0 = np.empty(self.n_cells)
        w = np.empty(self.n_cells)
        h = np.empty(self.n_cells)
        n = self.top_n
        top_w = self.region.width / n
        top_h = self.region.height / n
        for top, m in enumerate(self.subdivisions):
            iy, ix = divmod(top, n)
            base = int(self._offsets[top])
            sub_w = top_w / m
            sub_h = top_h / m
            for sub in range(m * m):
                jy, jx = divmod(sub, m)
                x0[base + sub] = self.region.min_x + ix * top_w + jx * sub_w
                y0[base + sub] = self.region.min_y + iy * top_h + jy * sub_h
                w[base + sub] = sub_w
                h[base + sub] = sub_h
        for arr in (x0, y0, w, h):
            arr.flags.writeable = False
        return x0, y0, w, h

    def locate_xy(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Vectorized point-to-cell lookup; points outside clamp to the boundary."""
        n = self.top_n
        fx = (np.asarray(xs) - self.region.min_x) / self.region.width
        fy = (np.asarray(ys) - self.region.min_y) / self.region.height
        ix = np.clip((fx * n).astype(np.int64), 0, n - 1)
        iy = np.clip((fy * n).astype(np.int64), 0, n - 1)
        top = iy * n + ix
        m = self._subdivision_array[top]
        # Fractional position within the top cell, rescaled to its M x M split.
        jx = np.clip(((fx * n) - ix).astype(float) * m, 0, None).astype(np.int64)
        jy = np.clip(((fy * n) - iy).astype(float) * m, 0, None).astype(np.int64)
        jx = np.minimum(jx, m - 1)
        jy = np.minimum(jy, m - 1)
        return self._offsets[top] + jy * m + jx

    def locate(self, p: Point) -> CellId:
        return int(self.locate_xy(np.array([p.x]), np.array([p.y]))[0])

    def cell_rect(self, cell: CellId) -> Rect:
        if not (0 <= cell < self.n_cells):
            raise ValueError(f"cell {cell} out of range [0, {self.n_cells})")
        x0, y0, w, h = self.cell_bounds
        return Rect(x0[cell], y0[cell], x0[cell] + w[cell], y0[cell] + h[cell])

    def to_dict(self) -> dict:
        return {
            "region": [self.region.min_x, self.region.min_y, self.region.max_x, self.region.max_y],
            "top_n": self.top_n,
            "subdivisions": list(self.subdivisions),
            "top_densities": list(self.top_densities),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "AdaptiveGrid":
        return cls(
            region=Rect(*payload["region"]),
            top_n=payload["top_n"],
            subdivisions=tuple(payload["subdivisions"]),
            top_densities=tuple(payload.get("top_densities", ())),
        )


def uniform_grid(region: Rect, n: int) -> AdaptiveGrid:
    """Plain n x n grid (no subdivision); used by evaluation metrics."""
    return AdaptiveGrid(region=region, top_n=n, subdivisions=(1,) * (n * n))


def normalized_top_densities(dataset: Dataset, region: Rect, n: int) -> np.ndarray:
    """Per-top-cell mass where each trace contributes 1 split over its points."""
    grid = uniform_grid(region, n)
    pts = dataset.point_array
    cells = grid.locate_xy(pts[:, 0], pts[:, 1])
    lengths = np.diff(dataset.trace_offsets)
    weights = np.repeat(1.0 / lengths, lengths)
    return np.bincount(cells, weights=weights, minlength=n * n)


def build_adaptive_grid(dataset: Dataset, eps_grid: float, n: int, rng) -> AdaptiveGrid:
    """Lay an n x n grid, measure noisy per-cell density, subdivide by density.

    Subdivision for a cell with noisy density share f is
    round(sqrt(f * n^2 * c)) clamped to [1, SUBDIVISION_CAP].
    """
    if n < 1:
        raise ValueError(f"grid n must be >= 1, got {n}")
    if eps_grid <= 0:
        raise ValueError(f"eps_grid must be positive, got {eps_grid}")
    if dataset.cardinality == 0:
        raise EmptyDatasetError("cannot build a grid from an empty dataset")

    region = bounding_box(dataset)
    density = normalized_top_densities(dataset, region, n)
    noisy = np.maximum(0.0, density + laplace_noise(1.0 / eps_grid, rng, size=n * n))
    total = max(1.0, float(noisy.sum()))
    m = np.rint(np.sqrt(noisy * n * n * DENSITY_SCALE / total)).astype(int)
    m = np.clip(m, 1, SUBDIVISION_CAP)
    return AdaptiveGrid(
        region=region,
        top_n=n,
        subdivisions=tuple(int(v) for v in m),
        top_densities=tuple(float(v) for v in noisy),
    )


def cell_sequences(dataset: Dataset, grid: AdaptiveGrid) -> list[np.ndarray]:
    """Per-trace cell sequences with consecutive duplicate cells collapsed."""
    pts = dataset.point_array
    cells = grid.locate_xy(pts[:, 0], pts[:, 1])
    offsets = dataset.trace_offsets
    out = []
    for i in range(dataset.cardinality):
        seq = cells[offsets[i] : offsets[i + 1]]
        keep = np.empty(len(seq), dtype=bool)
        keep[0] = True
        keep[1:] = seq[1:] != seq[:-1]
        out.append(seq[keep])
    return out


@dataclass(frozen=True)
class MarkovModel:
    """Order-1 cell-to-cell transition matrix; every row is a distribution."""

    transition: np.ndarray

    def __post_init__(self):
        t = self.transition
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise ValueError("transition matrix must be square")
        if (t < 0).any():
            raise ValueError("transition probabilities must be non-negative")
        if not np.allclose(t.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("every transition row must sum to 1")

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    def to_dict(self) -> dict:
        return {"transition": self.transition.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> "MarkovModel":
        return cls(transition=_frozen(np.array(payload["transition"], dtype=float)))


def build_markov(dataset: Dataset, grid: AdaptiveGrid, eps_markov: float, rng) -> MarkovModel:
    """Count per-trace transitions (each trace contributes total weight 1),
    perturb every matrix entry, clip, and renormalize rows."""
    if eps_markov <= 0:
        raise ValueError(f"eps_markov must be positive, got {eps_markov}")
    n = grid.n_cells
    counts = np.zeros((n, n))
    for seq in cell_sequences(dataset, grid):
        if len(seq) < 2:
            continue
        w = 1.0 / (len(seq) - 1)
        np.add.at(counts, (seq[:-1], seq[1:]), w)

    noisy = counts + laplace_noise(1.0 / eps_markov, rng, size=(n, n))
    noisy = np.maximum(noisy, 0.0)
    row_sums = noisy.sum(axis=1, keepdims=True)
    zero_rows = row_sums[:, 0] == 0.0
    noisy[zero_rows] = 1.0 / n
    row_sums[zero_rows] = 1.0
    return MarkovModel(transition=_frozen(noisy / row_sums))


@dataclass(frozen=True)
class TripDistribution:
    """Probability of each observed (start cell, end cell) trip pair.

    Pairs are kept in a fixed sorted order so inverse-CDF sampling is
    reproducible.
    """

    pairs: tuple[tuple[CellId, CellId], ...]
    probs: np.ndarray

    def __post_init__(self):
        if len(self.pairs) != len(self.probs):
            raise ValueError("pairs and probs must align")
        if (self.probs < 0).any():
            raise ValueError("trip probabilities must be non-negative")
        if abs(float(self.probs.sum()) - 1.0) > 1e-9:
            raise ValueError(f"trip pmf sums to {self.probs.sum()}, expected 1")

    @cached_property
    def pmf(self) -> dict[tuple[CellId, CellId], float]:
        return {pair: float(p) for pair, p in zip(self.pairs, self.probs)}

    @cached_property
    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)

    def to_dict(self) -> dict:
        return {"pairs": [list(p) for p in self.pairs], "probs": self.probs.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> "TripDistribution":
        return cls(
            pairs=tuple((int(a), int(b)) for a, b in payload["pairs"]),
            probs=_frozen(np.array(payload["probs"], dtype=float)),
        )


def trip_pairs(dataset: Dataset, grid: AdaptiveGrid) -> np.ndarray:
    """(start cell, end cell) per trace, shape (cardinality, 2)."""
    starts, ends = dataset.endpoints
    s = grid.locate_xy(starts[:, 0], starts[:, 1])
    e = grid.locate_xy(ends[:, 0], ends[:, 1])
    return np.column_stack([s, e])


def build_trip_distribution(
    dataset: Dataset, grid: AdaptiveGrid, eps_trip: float, rng
) -> TripDistribution:
    """Perturb per-pair trace counts, clip, and normalize into a pmf."""
    if eps_trip <= 0:
        raise ValueError(f"eps_trip must be positive, got {eps_trip}")
    pairs = trip_pairs(dataset, grid)
    keys = pairs[:, 0] * grid.n_cells + pairs[:, 1]
    uniq, counts = np.unique(keys, return_counts=True)
    noisy = counts + laplace_noise(1.0 / eps_trip, rng, size=len(uniq))
    noisy = np.maximum(noisy, 0.0)
    total = float(noisy.sum())
    if total <= 0.0:
        noisy = np.ones(len(uniq))
        total = float(len(uniq))
    ordered = tuple((int(k // grid.n_cells), int(k % grid.n_cells)) for k in uniq)
    return TripDistribution(pairs=ordered, probs=_frozen(noisy / total))


@dataclass(frozen=True)
class LengthDistribution:
    """Best-fit trip length model over {MIN_LENGTH, ..., LENGTH_CAP}."""

    kind: str  # "uniform" | "poisson" | "exponential"
    mean: float
    pmf: np.ndarray

    def __post_init__(self):
        if self.kind not in ("uniform", "poisson", "exponential"):
            raise ValueError(f"unknown length distribution kind {self.kind!r}")
        if len(self.pmf) != len(LENGTH_SUPPORT):
            raise ValueError("pmf must cover the full length support")
        if abs(float(self.pmf.sum()) - 1.0) > 1e-9:
            raise ValueError("length pmf must sum to 1")

    @cached_property
    def cdf(self) -> np.ndarray:
        return np.cumsum(self.pmf)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "mean": self.mean, "pmf": self.pmf.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> "LengthDistribution":
        return cls(
            kind=payload["kind"],
            mean=payload["mean"],
            pmf=_frozen(np.array(payload["pmf"], dtype=float)),
        )


def uniform_length_candidate(mean: float) -> np.ndarray:
    """Uniform over {2, ..., round(2*mean) - 2}, truncated to the support cap."""
    hi = max(MIN_LENGTH, int(round(2.0 * mean)) - 2)
    hi = min(hi, LENGTH_CAP)
    pmf = np.zeros(len(LENGTH_SUPPORT))
    pmf[: hi - MIN_LENGTH + 1] = 1.0
    return pmf / pmf.sum()


def poisson_length_candidate(mean: float) -> np.ndarray:
    mu = max(mean, 1e-9)
    log_pmf = -mu + LENGTH_SUPPORT * np.log(mu) - gammaln(LENGTH_SUPPORT + 1)
    pmf = np.exp(log_pmf)
    total = pmf.sum()
    if total <= 0.0:
        return uniform_length_candidate(float(LENGTH_SUPPORT.mean()))
    return pmf / total


def exponential_length_candidate(mean: float) -> np.ndarray:
    """Discretized exponential: geometric on {1, 2, ...} with the given mean."""
    p = 1.0 / max(mean, 1.0 + 1e-9)
    pmf = np.exp((LENGTH_SUPPORT - 1) * np.log1p(-p)) * p
    total = pmf.sum()
    if total <= 0.0:
        return uniform_length_candidate(float(LENGTH_SUPPORT.mean()))
    return pmf / total


_CANDIDATES = (
    ("uniform", uniform_length_candidate),
    ("poisson", poisson_length_candidate),
    ("exponential", exponential_length_candidate),
)


def fit_length_distribution(noisy_pmf: np.ndarray) -> LengthDistribution:
    """Pick the candidate family with minimum L1 distance to the noisy histogram."""
    mean = float((LENGTH_SUPPORT * noisy_pmf).sum())
    best = None
    for kind, make in _CANDIDATES:
        candidate = make(mean)
        l1 = float(np.abs(candidate - noisy_pmf).sum())
        if best is None or l1 < best[0]:
            best = (l1, kind, candidate)
    _, kind, pmf = best
    return LengthDistribution(kind=kind, mean=mean, pmf=_frozen(pmf))


def uniform_fallback_length() -> LengthDistribution:
    pmf = np.full(len(LENGTH_SUPPORT), 1.0 / len(LENGTH_SUPPORT))
    return LengthDistribution(kind="uniform", mean=float(LENGTH_SUPPORT.mean()), pmf=_frozen(pmf))


def length_histograms(
    dataset: Dataset, grid: AdaptiveGrid
) -> dict[tuple[CellId, CellId], np.ndarray]:
    """Per trip pair, the histogram of clipped trace lengths over the support."""
    pairs = trip_pairs(dataset, grid)
    lengths = np.clip(np.diff(dataset.trace_offsets), MIN_LENGTH, LENGTH_CAP)
    out: dict[tuple[CellId, CellId], np.ndarray] = {}
    for (s, e), ln in zip(pairs, lengths):
        hist = out.setdefault((int(s), int(e)), np.zeros(len(LENGTH_SUPPORT)))
        hist[int(ln) - MIN_LENGTH] += 1.0
    return out


def build_length_distributions(
    dataset: Dataset, grid: AdaptiveGrid, eps_len: float, rng
) -> dict[tuple[CellId, CellId], LengthDistribution]:
    """One noisy length histogram per trip pair, then a best-fit candidate.

    Trip pairs partition the dataset, so every histogram spends the full
    eps_len (parallel composition); the candidate fits are post-processing.
    """
    if eps_len <= 0:
        raise ValueError(f"eps_len must be positive, got {eps_len}")
    out: dict[tuple[CellId, CellId], LengthDistribution] = {}
    for pair, hist in sorted(length_histograms(dataset, grid).items()):
        noisy = hist + laplace_noise(1.0 / eps_len, rng, size=len(hist))
        noisy = np.maximum(noisy, 0.0)
        total = float(noisy.sum())
        if total <= 0.0:
            out[pair] = uniform_fallback_length()
        else:
            out[pair] = fit_length_distribution(noisy / total)
    return out


@dataclass(frozen=True)
class Synopsis:
    """The complete noise-protected bundle a synthesis run consumes."""

    grid: AdaptiveGrid
    markov: MarkovModel
    trips: TripDistribution
    lengths: dict[tuple[CellId, CellId], LengthDistribution]
    ledger: PrivacyLedger = field(default_factory=PrivacyLedger)

    def __post_init__(self):
        missing = [p for p, prob in self.trips.pmf.items() if prob > 0 and p not in self.lengths]
        if missing:
            raise ValueError(f"missing length distributions for trip pairs {missing[:3]}")

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "markov": self.markov.to_dict(),
            "trips": self.trips.to_dict(),
            "lengths": [
                {"pair": list(pair), **dist.to_dict()} for pair, dist in sorted(self.lengths.items())
            ],
            "ledger": self.ledger.to_dict(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Synopsis":
        return cls(
            grid=AdaptiveGrid.from_dict(payload["grid"]),
            markov=MarkovModel.from_dict(payload["markov"]),
            trips=TripDistribution.from_dict(payload["trips"]),
            lengths={
                (int(e["pair"][0]), int(e["pair"][1])): LengthDistribution.from_dict(e)
                for e in payload["lengths"]
            },
            ledger=PrivacyLedger.from_dict(payload["ledger"]),
        )


def build_synopsis(
    dataset: Dataset,
    allocation: BudgetAllocation,
    grid_n: int,
    rng,
) -> Synopsis:
    """Extract all four features from the dataset under the given budget split."""
    if dataset.cardinality == 0:
        raise EmptyDatasetError("cannot build a synopsis from an empty dataset")
    rng_grid, rng_markov, rng_trip, rng_len = rng.spawn(4)
    ledger = PrivacyLedger()

    grid = build_adaptive_grid(dataset, allocation.grid, grid_n, rng_grid)
    ledger.record("grid", allocation.grid)
    markov = build_markov(dataset, grid, allocation.markov, rng_markov)
    ledger.record("markov", allocation.markov)
    trips = build_trip_distribution(dataset, grid, allocation.trip, rng_trip)
    ledger.record("trip", allocation.trip)
    lengths = build_length_distributions(dataset, grid, allocation.length, rng_len)
    ledger.record("length", allocation.length)

    return Synopsis(grid=grid, markov=markov, trips=trips, lengths=lengths, ledger=ledger)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr
