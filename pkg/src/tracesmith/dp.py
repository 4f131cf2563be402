"""Laplace mechanism, budget-weight splitting, and privacy-cost bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

WEIGHT_SUM_TOL = 1e-9

FEATURES = ("grid", "markov", "trip", "length")


class BudgetError(ValueError):
    """A privacy-budget constraint was violated."""


@dataclass(frozen=True)
class BudgetWeights:
    """Fractions of the total budget given to the four synopsis features."""

    w1: float
    w2: float
    w3: float
    w4: float

    def __post_init__(self):
        for name, w in zip(("w1", "w2", "w3", "w4"), self.as_tuple()):
            if not (0.0 < w < 1.0):
                raise BudgetError(f"{name}={w} is outside the open interval (0, 1)")
        total = sum(self.as_tuple())
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise BudgetError(f"weights sum to {total}, expected 1 within {WEIGHT_SUM_TOL}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.w1, self.w2, self.w3, self.w4)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple())

    @classmethod
    def equal(cls) -> "BudgetWeights":
        return cls(0.25, 0.25, 0.25, 0.25)

    @classmethod
    def from_iterable(cls, values) -> "BudgetWeights":
        vals = [float(v) for v in values]
        if len(vals) != 4:
            raise BudgetError(f"expected 4 weights, got {len(vals)}")
        return cls(*vals)


@dataclass(frozen=True)
class BudgetAllocation:
    """Per-feature epsilon shares; sums to the total budget."""

    epsilon_total: float
    grid: float
    markov: float
    trip: float
    length: float

    @property
    def per_feature(self) -> dict[str, float]:
        return {"grid": self.grid, "markov": self.markov, "trip": self.trip, "length": self.length}


def split_budget(epsilon: float, weights: BudgetWeights) -> BudgetAllocation:
    if epsilon <= 0:
        raise BudgetError(f"epsilon must be positive, got {epsilon}")
    w1, w2, w3, w4 = weights.as_tuple()
    return BudgetAllocation(
        epsilon_total=epsilon,
        grid=epsilon * w1,
        markov=epsilon * w2,
        trip=epsilon * w3,
        length=epsilon * w4,
    )


def laplace_noise(scale: float, rng, size=None) -> Union[float, np.ndarray]:
    """Sample Laplace(0, scale) noise via the inverse CDF of one uniform draw.

    With ``size`` set, returns an array of independent samples from the same
    source, one uniform draw per sample.
    """
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    if size is None:
        u = rng.random()
        while u == 0.0:  # keep u in the open interval (0, 1)
            u = rng.random()
        centered = u - 0.5
        return -scale * math.copysign(1.0, centered) * math.log1p(-2.0 * abs(centered))
    u = rng.random(size)
    u = np.where(u == 0.0, 0.5, u)
    centered = u - 0.5
    return -scale * np.sign(centered) * np.log1p(-2.0 * np.abs(centered))


@dataclass
class PrivacyLedger:
    """Append-only record of every budgeted data access in a run."""

    entries: list[tuple[str, float]] = field(default_factory=list)

    def record(self, label: str, epsilon: float) -> None:
        self.entries.append((label, float(epsilon)))

    @property
    def total(self) -> float:
        return sum(eps for _, eps in self.entries)

    def to_dict(self) -> dict:
        return {
            "entries": [{"label": label, "epsilon": eps} for label, eps in self.entries],
            "total": self.total,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "PrivacyLedger":
        ledger = cls()
        for entry in payload.get("entries", []):
            ledger.record(entry["label"], entry["epsilon"])
        return ledger


def derive_rngs(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Split one seeded source into n independent streams, deterministically."""
    return list(rng.spawn(n))


def make_rng(seed: Optional[int]) -> np.random.Generator:
    return np.random.default_rng(seed)
