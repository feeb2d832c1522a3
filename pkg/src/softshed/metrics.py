"""Scoring of allocations: satisfaction levels, block-tariff revenue and the
alpha-fairness inequality."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from softshed.model import (
    AllocationResult,
    DemandProfile,
    DomainError,
    InfeasibleAllocationError,
    validate_alpha,
)

FAIRNESS_TOL = 1e-6


class Level(IntEnum):
    """Household satisfaction state, ordered L1 (blackout) < ... < L5."""

    L1 = 1
    L2 = 2
    L3 = 3
    L4 = 4
    L5 = 5


@dataclass(frozen=True)
class SatisfactionConfig:
    u_max: float = 1.0
    th_upper: float = 0.75
    th_lower: float = 0.25

    def __post_init__(self) -> None:
        if not 0 < self.th_lower < self.th_upper < 1:
            raise ValueError("need 0 < th_lower < th_upper < 1")
        if not self.u_max > 0:
            raise ValueError("u_max must be positive")


@dataclass(frozen=True)
class TariffSchedule:
    """Increasing-block tariff.

    ``boundaries`` are the block edges b_1 < ... < b_(T-1) in kWh and
    ``prices`` the T per-kWh prices. A single price is a flat tariff.
    """

    boundaries: tuple[float, ...]
    prices: tuple[float, ...]

    def __post_init__(self) -> None:
        b = tuple(float(v) for v in self.boundaries)
        p = tuple(float(v) for v in self.prices)
        if len(p) < 1 or len(p) != len(b) + 1:
            raise ValueError(f"{len(p)} prices for {len(b)} boundaries; need len(prices) == len(boundaries) + 1")
        if any(v <= 0 for v in p):
            raise ValueError("prices must be positive")
        if any(hi <= lo for lo, hi in zip(b, b[1:])):
            raise ValueError("boundaries must be strictly increasing")
        object.__setattr__(self, "boundaries", b)
        object.__setattr__(self, "prices", p)

    @classmethod
    def two_block(cls, threshold: float, prices: Sequence[float] = (10.0, 20.0)) -> "TariffSchedule":
        return cls((threshold,), tuple(prices))

    @classmethod
    def flat(cls, price: float) -> "TariffSchedule":
        return cls((), (price,))


@dataclass(frozen=True)
class SatisfactionReport:
    levels: tuple[Level, ...]
    distribution: dict[Level, float]
    utilities: tuple[float, ...]
    excluded: tuple[int, ...] = ()

    @property
    def mean_utility(self) -> float:
        return float(np.mean(self.utilities)) if self.utilities else math.nan


def satisfaction_level(x: float, d: float, cfg: SatisfactionConfig = SatisfactionConfig()) -> Level:
    """Map an allocation/demand ratio onto L1..L5.

    L1 is exactly zero allocation; L2 covers ratios up to ``th_lower``, L3 up
    to one half, L4 up to ``th_upper`` and L5 anything above.
    """
    x, d = float(x), float(d)
    if not d > 0:
        raise DomainError(f"satisfaction ratio undefined for demand {d}")
    if x < 0 or x > d * (1 + 1e-9):
        raise DomainError(f"allocation {x} outside [0, {d}]")
    if x == 0:
        return Level.L1
    r = x / d
    if r <= cfg.th_lower:
        return Level.L2
    if r <= 0.5:
        return Level.L3
    if r <= cfg.th_upper:
        return Level.L4
    return Level.L5


def satisfaction_utility(level: Level, cfg: SatisfactionConfig = SatisfactionConfig()) -> float:
    return {
        Level.L5: cfg.u_max,
        Level.L4: cfg.th_upper,
        Level.L3: (cfg.th_upper + cfg.th_lower) / 2,
        Level.L2: cfg.th_lower,
        Level.L1: 0.0,
    }[Level(level)]


def level_distribution(levels: Iterable[Level]) -> dict[Level, float]:
    """Percentage of households in each level, keyed L5 down to L1."""
    levels = [Level(v) for v in levels]
    if not levels:
        raise ValueError("need at least one level")
    n = len(levels)
    counts = {lv: 0 for lv in sorted(Level, reverse=True)}
    for lv in levels:
        counts[lv] += 1
    return {lv: 100.0 * c / n for lv, c in counts.items()}


def satisfaction_report(
    result: AllocationResult,
    demand: DemandProfile,
    cfg: SatisfactionConfig = SatisfactionConfig(),
) -> SatisfactionReport:
    """Levels and utilities for every household with positive demand.

    Zero-demand households have no defined ratio; their indices are listed in
    ``excluded`` and they do not enter the distribution.
    """
    x, d = result.allocations, demand.demands
    keep = np.flatnonzero(d > 0)
    levels = tuple(satisfaction_level(x[i], d[i], cfg) for i in keep)
    return SatisfactionReport(
        levels=levels,
        distribution=level_distribution(levels),
        utilities=tuple(satisfaction_utility(lv, cfg) for lv in levels),
        excluded=tuple(int(i) for i in np.flatnonzero(d <= 0)),
    )


def cumulative_share(distribution: Mapping[Level, float]) -> dict[Level, float]:
    """Share of households at or above each level."""
    out: dict[Level, float] = {}
    acc = 0.0
    for lv in sorted(Level, reverse=True):
        acc += distribution.get(lv, 0.0)
        out[lv] = acc
    return out


def household_revenue(x: float | ArrayLike, tariff: TariffSchedule) -> float | NDArray[np.float64]:
    """Block-tariff charge for consumption ``x`` (scalar or array)."""
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < 0):
        raise ValueError("consumption must be non-negative")
    edges = np.array((0.0,) + tariff.boundaries + (math.inf,))
    charge = np.zeros_like(arr)
    for lo, hi, p in zip(edges[:-1], edges[1:], tariff.prices):
        charge = charge + p * np.clip(arr - lo, 0.0, hi - lo)
    return float(charge) if charge.ndim == 0 else charge


def total_revenue(result: AllocationResult | ArrayLike, tariff: TariffSchedule) -> float:
    x = result.allocations if isinstance(result, AllocationResult) else np.asarray(result, float)
    return float(np.sum(household_revenue(x, tariff)))


def percentile_threshold(demand: DemandProfile | ArrayLike, q: float) -> float:
    """Nearest-rank q-th percentile of the demands."""
    d = demand.demands if isinstance(demand, DemandProfile) else np.asarray(demand, float)
    if d.size == 0:
        raise ValueError("need at least one demand")
    if not 0 <= q <= 100:
        raise ValueError(f"percentile must be in [0, 100], got {q}")
    rank = max(1, math.ceil(q / 100 * d.size))
    return float(np.sort(d)[rank - 1])


def alpha_fairness_check(
    candidate: AllocationResult | ArrayLike,
    reference: AllocationResult | ArrayLike,
    alpha: float,
    demand: DemandProfile | None = None,
) -> float:
    """Weighted first-order gain ``sum((x - x_ref) / x_ref**alpha)``.

    The reference is alpha-fair against the candidate when the value is at
    most ``FAIRNESS_TOL``. Passing ``demand`` checks that both vectors are
    feasible for the same instance before evaluating.

    Raises:
        InfeasibleAllocationError: on a failed feasibility gate.
        DomainError: if the reference has a non-positive coordinate.
    """
    a = validate_alpha(alpha)
    x = candidate.allocations if isinstance(candidate, AllocationResult) else np.asarray(candidate, float)
    ref = reference.allocations if isinstance(reference, AllocationResult) else np.asarray(reference, float)
    if x.shape != ref.shape:
        raise InfeasibleAllocationError(f"candidate has {x.size} entries, reference {ref.size}")
    if demand is not None:
        d = demand.demands
        for name, v in (("candidate", x), ("reference", ref)):
            bad = np.flatnonzero((v < 0) | (v > d))
            if bad.size:
                i = int(bad[0])
                raise InfeasibleAllocationError(f"{name} x_{i + 1} = {v[i]} outside [0, d_{i + 1} = {d[i]}]")
        s_ref = float(ref.sum())
        if abs(float(x.sum()) - s_ref) > 1e-9 * max(s_ref, 1.0):
            raise InfeasibleAllocationError("candidate and reference clear different supplies")
    if np.any(ref <= 0):
        i = int(np.flatnonzero(ref <= 0)[0])
        raise DomainError(f"reference allocation {i} is not positive", index=i)
    if np.array_equal(x, ref):
        return 0.0
    weights = np.exp(-a * np.log(ref))
    return float(np.sum((x - ref) * weights))
