"""Domain types and the alpha-fair utility family.

Every quantity is in kWh (allocations, demands, supply) or currency units
(revenue). There is no unit conversion layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Hashable, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray


class DomainError(ValueError):
    """A utility or ratio was evaluated outside its domain."""

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


class InfeasibleAllocationError(ValueError):
    """An allocation violates the box or clearance constraints."""


class NotApplicableError(ValueError):
    """A check was requested for a result it does not apply to."""


class ConvergenceError(RuntimeError):
    """The dual bisection ran out of iterations."""

    def __init__(self, message: str, dual_price: float, residual: float, iterations: int):
        super().__init__(message)
        self.dual_price = dual_price
        self.residual = residual
        self.iterations = iterations


class Method(str, Enum):
    ALPHA_FAIR = "alpha_fair"
    MAX_MIN = "max_min"
    EQUITABLE = "equitable"
    PERCENTAGE_EQUITABLE = "percentage_equitable"


def _frozen_array(values: ArrayLike) -> NDArray[np.float64]:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DemandProfile:
    """Per-household maximum demand for one allocation period.

    Attributes:
        household_ids: Opaque unique identifiers, aligned with ``demands``.
        demands: Non-negative demands in kWh, at least one strictly positive.
    """

    household_ids: tuple[Hashable, ...]
    demands: NDArray[np.float64]

    def __post_init__(self) -> None:
        ids = tuple(self.household_ids)
        d = _frozen_array(self.demands)
        if d.ndim != 1 or d.size == 0:
            raise ValueError("demands must be a non-empty 1-D sequence")
        if len(ids) != d.size:
            raise ValueError(f"{len(ids)} household ids for {d.size} demands")
        if not np.all(np.isfinite(d)):
            raise ValueError("demands must be finite")
        if np.any(d < 0):
            raise ValueError(f"negative demand at index {int(np.argmax(d < 0))}")
        if not np.any(d > 0):
            raise ValueError("at least one demand must be positive")
        if len(set(ids)) != len(ids):
            raise ValueError("household ids must be unique")
        object.__setattr__(self, "household_ids", ids)
        object.__setattr__(self, "demands", d)
        object.__setattr__(self, "_total", float(d.sum()))

    @classmethod
    def from_demands(cls, demands: ArrayLike, ids: Optional[Sequence[Hashable]] = None) -> "DemandProfile":
        """Build a profile, numbering households 0..N-1 when no ids are given."""
        d = np.asarray(demands, dtype=np.float64)
        if ids is None:
            ids = range(d.size)
        return cls(tuple(ids), d)

    @property
    def n(self) -> int:
        return int(self.demands.size)

    @property
    def total(self) -> float:
        return self._total


@dataclass(frozen=True)
class SupplySpec:
    """Available supply, either absolute or as a shortfall of total demand.

    Exactly one of ``supply`` (kWh) and ``shortfall_fraction`` is given. With
    a shortfall ``f`` the supply is ``(1 - f) * sum(d)``.
    """

    supply: Optional[float] = None
    shortfall_fraction: Optional[float] = None

    def __post_init__(self) -> None:
        if (self.supply is None) == (self.shortfall_fraction is None):
            raise ValueError("give exactly one of supply and shortfall_fraction")
        if self.supply is not None and not (math.isfinite(self.supply) and self.supply > 0):
            raise ValueError(f"supply must be positive and finite, got {self.supply}")
        if self.shortfall_fraction is not None and not 0 <= self.shortfall_fraction < 1:
            raise ValueError(f"shortfall_fraction must lie in [0, 1), got {self.shortfall_fraction}")

    @classmethod
    def from_shortfall(cls, fraction: float) -> "SupplySpec":
        return cls(shortfall_fraction=fraction)

    def amount(self, demand: DemandProfile) -> float:
        """Resolve the supply in kWh for ``demand``, enforcing 0 < S <= sum(d)."""
        total = demand.total
        if self.shortfall_fraction is not None:
            return (1.0 - self.shortfall_fraction) * total
        s = float(self.supply)
        if s > total * (1 + 1e-12):
            raise ValueError(f"supply {s} exceeds total demand {total}")
        return min(s, total)


@dataclass(frozen=True)
class AllocationResult:
    """Quota vector plus solver diagnostics.

    ``dual_price`` is the clearance multiplier (per-unit price) and is only
    set by the welfare solver with alpha > 0. ``log_dual_price`` carries the
    same quantity in log form, since for large alpha the price itself
    overflows or underflows a float.
    """

    allocations: NDArray[np.float64]
    method: Method
    supply: float
    clearance_residual: float
    iterations: int = 0
    dual_price: Optional[float] = None
    log_dual_price: Optional[float] = None
    alpha: Optional[float] = None
    extra: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "allocations", _frozen_array(self.allocations))
        object.__setattr__(self, "method", Method(self.method))

    @classmethod
    def build(cls, x: ArrayLike, method: Method, supply: float, **kwargs: Any) -> "AllocationResult":
        x = np.asarray(x, dtype=np.float64)
        return cls(x, method, supply, abs(float(x.sum()) - supply), **kwargs)

    def check_feasible(self, demand: DemandProfile, rel_tol: float = 1e-9) -> None:
        """Raise InfeasibleAllocationError unless 0 <= x <= d and sum(x) == S."""
        x, d = self.allocations, demand.demands
        if x.shape != d.shape:
            raise InfeasibleAllocationError(f"{x.size} allocations for {d.size} households")
        low = np.flatnonzero(x < 0)
        if low.size:
            i = int(low[0])
            raise InfeasibleAllocationError(f"x_{i + 1} < 0")
        high = np.flatnonzero(x > d)
        if high.size:
            i = int(high[0])
            raise InfeasibleAllocationError(f"x_{i + 1} > d_{i + 1}")
        if abs(float(x.sum()) - self.supply) > rel_tol * self.supply:
            raise InfeasibleAllocationError(
                f"allocations sum to {float(x.sum())!r}, supply is {self.supply!r}"
            )


def validate_alpha(alpha: float) -> float:
    a = float(alpha)
    if not math.isfinite(a) or a < 0:
        raise ValueError(f"alpha must be finite and non-negative, got {alpha}")
    return a


def utility_value(x: float, alpha: float) -> float:
    """Alpha-fair utility: ``x**(1-a)/(1-a)``, or ``log(x)`` when a == 1."""
    a = validate_alpha(alpha)
    x = float(x)
    if x < 0 or math.isnan(x):
        raise DomainError(f"utility undefined for negative allocation {x}")
    if x == 0:
        if a >= 1:
            raise DomainError(f"utility diverges at x=0 for alpha={a}")
        return 0.0
    if a == 1:
        return math.log(x)
    try:
        return x ** (1 - a) / (1 - a)
    except OverflowError:
        return -math.inf if a > 1 else math.inf


def marginal_utility(x: float, alpha: float) -> float:
    """Derivative of the utility, ``x**(-alpha)``."""
    a = validate_alpha(alpha)
    x = float(x)
    if not x > 0:
        raise DomainError(f"marginal utility undefined at x={x}")
    try:
        return x ** -a
    except OverflowError:
        return math.inf


def welfare(allocations: AllocationResult | ArrayLike, alpha: float) -> float:
    """Sum of household utilities.

    Raises:
        DomainError: naming the first household whose allocation is outside
            the utility domain.
    """
    a = validate_alpha(alpha)
    x = allocations.allocations if isinstance(allocations, AllocationResult) else np.asarray(allocations, float)
    bad = np.flatnonzero((x < 0) | np.isnan(x) | ((x == 0) & (a >= 1)))
    if bad.size:
        i = int(bad[0])
        raise DomainError(f"utility undefined for household {i} (x={x[i]})", index=i)
    if a == 1:
        terms = np.log(x)
    else:
        with np.errstate(over="ignore", divide="ignore"):
            terms = np.power(x, 1 - a) / (1 - a)
    # sorted summation makes the total independent of household order
    return float(np.sort(terms).sum())
