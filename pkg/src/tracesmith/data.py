"""Trace dataset model, flat-text trace file parsing, and a desk-scale generator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import IO, Iterable, Union

import numpy as np

# Padding applied to a degenerate bounding-box dimension so gridding stays valid.
DEGENERATE_PAD = 1e-9


class TraceParseError(ValueError):
    """Malformed trace file input, pinned to the offending line."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class EmptyDatasetError(ValueError):
    """Raised when a pipeline entry point receives a dataset with no traces."""


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"point coordinates must be finite, got ({self.x}, {self.y})")


@dataclass(frozen=True)
class Rect:
    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self):
        if not (self.min_x < self.max_x and self.min_y < self.max_y):
            raise ValueError(
                f"rectangle must have positive extent, got "
                f"x [{self.min_x}, {self.max_x}], y [{self.min_y}, {self.max_y}]"
            )

    @property
    def width(self) -> float:
        return self.max_x - self.min_x

    @property
    def height(self) -> float:
        return self.max_y - self.min_y

    def contains(self, x: float, y: float) -> bool:
        return self.min_x <= x <= self.max_x and self.min_y <= y <= self.max_y


@dataclass(frozen=True)
class Trace:
    """Ordered sequence of at least two planar points; immutable once built."""

    points: tuple[Point, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if len(self.points) < 2:
            raise ValueError(f"a trace needs at least 2 points, got {len(self.points)}")

    @classmethod
    def from_xy(cls, coords: Iterable[tuple[float, float]]) -> "Trace":
        return cls(tuple(Point(float(x), float(y)) for x, y in coords))

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class Dataset:
    traces: tuple[Trace, ...]

    def __post_init__(self):
        object.__setattr__(self, "traces", tuple(self.traces))

    @property
    def cardinality(self) -> int:
        return len(self.traces)

    def __len__(self) -> int:
        return len(self.traces)

    # Flattened views used by the vectorized feature builders and metrics.
    # Cached on the instance; safe because the dataset is immutable.

    @cached_property
    def point_array(self) -> np.ndarray:
        """All points as an (n_points, 2) array in trace order."""
        out = np.empty((sum(len(t) for t in self.traces), 2))
        i = 0
        for t in self.traces:
            for p in t.points:
                out[i, 0] = p.x
                out[i, 1] = p.y
                i += 1
        out.flags.writeable = False
        return out

    @cached_property
    def trace_offsets(self) -> np.ndarray:
        """Start index of each trace in ``point_array``, plus the total count."""
        lengths = [len(t) for t in self.traces]
        out = np.concatenate(([0], np.cumsum(lengths)))
        out.flags.writeable = False
        return out

    @cached_property
    def endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        """(starts, ends) arrays of shape (cardinality, 2)."""
        starts = np.array([[t.points[0].x, t.points[0].y] for t in self.traces])
        ends = np.array([[t.points[-1].x, t.points[-1].y] for t in self.traces])
        starts.flags.writeable = False
        ends.flags.writeable = False
        return starts, ends


def parse_dataset(source: Union[str, bytes, IO]) -> Dataset:
    """Parse the flat trace file format into a Dataset.

    One trace per line as ``x,y;x,y;...;x,y``; lines beginning with ``#`` and
    blank lines are skipped; a trailing ``;`` is tolerated.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")

    traces = []
    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(";")
        if parts and parts[-1] == "":
            parts = parts[:-1]
        points = []
        for part in parts:
            fields = part.split(",")
            if len(fields) != 2:
                raise TraceParseError(f"expected 'x,y', got {part!r}", lineno)
            try:
                x, y = float(fields[0]), float(fields[1])
            except ValueError:
                raise TraceParseError(f"malformed coordinate pair {part!r}", lineno) from None
            if not (math.isfinite(x) and math.isfinite(y)):
                raise TraceParseError(f"non-finite coordinate in {part!r}", lineno)
            points.append(Point(x, y))
        if len(points) < 2:
            raise TraceParseError(f"trace has {len(points)} point(s), need at least 2", lineno)
        traces.append(Trace(tuple(points)))

    if not traces:
        raise EmptyDatasetError("no traces found in input")
    return Dataset(tuple(traces))


def serialize_dataset(dataset: Dataset) -> str:
    """Write the flat trace file format: 6-decimal coordinates, ';'-separated."""
    lines = []
    for trace in dataset.traces:
        lines.append(";".join(f"{p.x:.6f},{p.y:.6f}" for p in trace.points))
    return "\n".join(lines) + "\n"


def bounding_box(dataset: Dataset) -> Rect:
    """Tight hull of all points, padded on each side of any degenerate dimension."""
    if dataset.cardinality == 0:
        raise EmptyDatasetError("cannot compute the bounding box of an empty dataset")
    pts = dataset.point_array
    min_x, min_y = pts.min(axis=0)
    max_x, max_y = pts.max(axis=0)
    if min_x == max_x:
        min_x -= DEGENERATE_PAD
        max_x += DEGENERATE_PAD
    if min_y == max_y:
        min_y -= DEGENERATE_PAD
        max_y += DEGENERATE_PAD
    return Rect(float(min_x), float(min_y), float(max_x), float(max_y))


# Fixed attractor layout for the toy generator, in region-relative coordinates.
_ATTRACTORS = np.array([[0.20, 0.30], [0.70, 0.75], [0.85, 0.20]])
_START_PROBS = np.array([0.55, 0.30, 0.15])
_TARGET_PROBS = np.array([
    [0.10, 0.70, 0.20],
    [0.20, 0.10, 0.70],
    [0.60, 0.30, 0.10],
])
# Trip length is uniform on a per-attractor-pair subrange of [2, 20] so that
# length structure differs across trips and gives the optimizer signal.
_LENGTH_RANGES = {
    (i, j): (2 + 2 * (i + j), min(20, 8 + 3 * (i + j)))
    for i in range(3)
    for j in range(3)
}


def generate_toy_dataset(n_traces: int, region: Rect, seed: int) -> Dataset:
    """Deterministic clustered random-walk dataset for desk-scale experiments.

    Traces start near one of three attractors and drift toward another, so
    spatial density, trip structure, and per-trip length structure are all
    non-uniform.
    """
    if n_traces < 1:
        raise ValueError(f"n_traces must be >= 1, got {n_traces}")
    rng = np.random.default_rng(seed)

    scale = np.array([region.width, region.height])
    origin = np.array([region.min_x, region.min_y])
    attractors = origin + _ATTRACTORS * scale
    spread = 0.06 * min(region.width, region.height)
    step_noise = 0.04 * min(region.width, region.height)

    traces = []
    for _ in range(n_traces):
        i = int(rng.choice(3, p=_START_PROBS))
        j = int(rng.choice(3, p=_TARGET_PROBS[i]))
        lo, hi = _LENGTH_RANGES[(i, j)]
        length = int(rng.integers(lo, hi + 1))

        cur = attractors[i] + rng.normal(0.0, spread, 2)
        target = attractors[j] + rng.normal(0.0, spread, 2)
        pts = np.empty((length, 2))
        pts[0] = cur
        for k in range(1, length):
            cur = cur + 0.25 * (target - cur) + rng.normal(0.0, step_noise, 2)
            pts[k] = cur
        pts[:, 0] = np.clip(pts[:, 0], region.min_x, region.max_x)
        pts[:, 1] = np.clip(pts[:, 1], region.min_y, region.max_y)
        traces.append(Trace.from_xy(pts))
    return Dataset(tuple(traces))
