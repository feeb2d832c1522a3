"""Quota allocators for a single supply shared by N households.

The welfare solver maximizes ``sum U_alpha(x_i)`` subject to
``0 <= x_i <= d_i`` and ``sum x_i = S``. Its stationarity condition
``x_i**(-alpha) = lam`` for unsaturated households gives the clipped
response ``x_i(lam) = min(d_i, lam**(-1/alpha))``; the solver bisects on
``t = log(lam)`` until the responses clear the supply.

The baselines (equal split, proportional scaling, progressive filling) need
no optimization and report no dual price.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from softshed.model import (
    AllocationResult,
    ConvergenceError,
    DemandProfile,
    Method,
    NotApplicableError,
    SupplySpec,
    validate_alpha,
)

# alpha at or above this is cross-checked against progressive filling
LARGE_ALPHA = 1000.0
SNAP_TOL = 1e-6


@dataclass(frozen=True)
class SolverConfig:
    clearance_rel_tol: float = 1e-10
    clearance_abs_tol: float = 1e-12
    max_bisection_iters: int = 200
    alpha_zero_policy: str = "greedy_largest_first"

    def __post_init__(self) -> None:
        if not (self.clearance_rel_tol > 0 and self.clearance_abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_bisection_iters < 1:
            raise ValueError("max_bisection_iters must be at least 1")
        if self.alpha_zero_policy != "greedy_largest_first":
            raise ValueError(f"unknown alpha_zero_policy {self.alpha_zero_policy!r}")


def equitable(demand: DemandProfile, supply: SupplySpec) -> AllocationResult:
    """Equal split of the supply, clipped at each demand.

    Households whose demand is below the current equal share receive their
    demand and drop out; the leftover is split again among the rest.
    """
    S = supply.amount(demand)
    d = demand.demands
    x = np.zeros_like(d)
    active = np.arange(d.size)
    remaining = S
    rounds = 0
    while active.size:
        rounds += 1
        share = remaining / active.size
        clipped = d[active] < share
        if not clipped.any():
            x[active] = share
            break
        idx = active[clipped]
        x[idx] = d[idx]
        remaining -= float(d[idx].sum())
        active = active[~clipped]
    return AllocationResult.build(x, Method.EQUITABLE, S, iterations=rounds)


def percentage_equitable(demand: DemandProfile, supply: SupplySpec) -> AllocationResult:
    """Every household receives the same fraction ``S / sum(d)`` of its demand."""
    S = supply.amount(demand)
    frac = min(1.0, S / demand.total)
    x = demand.demands * frac
    return AllocationResult.build(x, Method.PERCENTAGE_EQUITABLE, S)


def _water_level(d: np.ndarray, S: float) -> float | None:
    """Level L with ``sum(min(d, L)) == S``, or None when every household saturates."""
    ds = np.sort(d)
    n = ds.size
    before = np.concatenate(([0.0], np.cumsum(ds)[:-1]))
    levels = (S - before) / (n - np.arange(n))
    hit = np.flatnonzero(levels <= ds)
    if hit.size == 0:
        return None
    return float(levels[hit[0]])


def max_min_fair(demand: DemandProfile, supply: SupplySpec) -> AllocationResult:
    """Progressive filling: raise a common level, saturating households at d_i."""
    S = supply.amount(demand)
    d = demand.demands
    level = _water_level(d, S)
    x = d.copy() if level is None else np.minimum(d, level)
    return AllocationResult.build(x, Method.MAX_MIN, S, extra={"level": level})


def alpha_zero_allocate(demand: DemandProfile, supply: SupplySpec) -> AllocationResult:
    """Throughput-optimal allocation with a greedy largest-demand-first tie-break.

    With alpha = 0 every clearing vector maximizes welfare. Households are
    filled to their demand in decreasing order of demand (input order breaks
    ties) until the supply runs out.
    """
    S = supply.amount(demand)
    d = demand.demands
    order = np.argsort(-d, kind="stable")
    ds = d[order]
    before = np.cumsum(ds) - ds
    x = np.empty_like(d)
    x[order] = np.clip(S - before, 0.0, ds)
    return AllocationResult.build(x, Method.ALPHA_FAIR, S, alpha=0.0)


def _polish_level(d: np.ndarray, S: float, level: float) -> float | None:
    """Recompute the level exactly from the saturated set implied by ``level``."""
    for _ in range(64):
        sat = d <= level
        k = d.size - int(sat.sum())
        if k == 0:
            return None
        new = (S - float(d[sat].sum())) / k
        if new == level or (sat == (d <= new)).all():
            return new
        level = new
    return level


def alpha_fair(
    demand: DemandProfile,
    supply: SupplySpec,
    alpha: float = 1.0,
    cfg: SolverConfig | None = None,
) -> AllocationResult:
    """Maximize total alpha-fair utility by dual bisection.

    Args:
        demand: Household demands. Zero-demand households get zero and are
            left out of the dual system.
        supply: Available supply.
        alpha: Fairness parameter, ``alpha >= 0``. Zero dispatches to
            :func:`alpha_zero_allocate`.
        cfg: Tolerances and iteration cap.

    Returns:
        The unique welfare maximizer with its clearance price as ``dual_price``.

    Raises:
        ConvergenceError: if the bisection does not clear the supply within
            ``cfg.max_bisection_iters`` steps.
    """
    cfg = cfg or SolverConfig()
    a = validate_alpha(alpha)
    if a == 0:
        return alpha_zero_allocate(demand, supply)

    S = supply.amount(demand)
    d = demand.demands
    tol = cfg.clearance_abs_tol + cfg.clearance_rel_tol * S
    pos = None if d.min() > 0 else d > 0
    dp = d if pos is None else d[pos]
    n = dp.size
    d_max = float(dp.max())

    if demand.total - S <= tol:
        x = d.copy()
        log_lam = -a * math.log(d_max)
        return _finish(x, S, a, log_lam, 0, level=None)

    # g(t) = sum(min(d, exp(-t/a))) is non-increasing in t = log(lam);
    # g(t_lo) = sum(d) >= S and g(t_hi) <= S bracket the root. In the level
    # L = exp(-t/a), g is piecewise linear with slope #(d > L), so a Newton
    # step lands on the next breakpoint; it is taken when it stays inside the
    # bracket and the bracket is halved otherwise.
    t_lo = -a * math.log(d_max)
    t_hi = -a * math.log(S / n)
    g = math.nan
    t = t_hi
    buf = np.empty_like(dp)
    for it in range(1, cfg.max_bisection_iters + 1):
        level = math.exp(-t / a)
        np.minimum(dp, level, out=buf)
        g = float(buf.sum())
        if abs(g - S) <= tol:
            break
        if g > S:
            t_lo = t
        else:
            t_hi = t
        t_next = 0.5 * (t_lo + t_hi)
        free = n - int(np.count_nonzero(buf == dp))
        if free:
            newton = level + (S - g) / free
            if newton > 0:
                t_newton = -a * math.log(newton)
                if t_lo < t_newton < t_hi:
                    t_next = t_newton
        t = t_next
    else:
        raise ConvergenceError(
            f"bisection did not clear supply after {cfg.max_bisection_iters} iterations",
            dual_price=_safe_exp(t),
            residual=abs(g - S),
            iterations=cfg.max_bisection_iters,
        )

    # one more Newton step from the converged level is exact when it keeps
    # the saturated set; otherwise iterate on the set until it settles
    free = int(np.count_nonzero(dp > level))
    exact = level + (S - g) / free if free else None
    if exact is not None and exact > 0 and int(np.count_nonzero(dp > exact)) == free:
        level = exact
    else:
        level = _polish_level(dp, S, level)
    if level is None:
        xp = dp.copy()
        log_lam = -a * math.log(d_max)
    else:
        xp = np.minimum(dp, level)
        log_lam = -a * math.log(level)
    if pos is None:
        x = xp
    else:
        x = np.zeros_like(d)
        x[pos] = xp

    snapped = False
    if a >= LARGE_ALPHA:
        mm = max_min_fair(demand, supply).allocations
        if np.max(np.abs(mm - x)) <= SNAP_TOL:
            x = np.array(mm)
            snapped = True
    return _finish(x, S, a, log_lam, it, level=level, snapped=snapped)


def _safe_exp(v: float) -> float:
    try:
        return math.exp(v)
    except OverflowError:
        return math.inf


def _finish(x, S, alpha, log_lam, iterations, **extra) -> AllocationResult:
    return AllocationResult.build(
        x,
        Method.ALPHA_FAIR,
        S,
        iterations=iterations,
        dual_price=_safe_exp(log_lam),
        log_dual_price=log_lam,
        alpha=alpha,
        extra=extra,
    )


@dataclass(frozen=True)
class KKTReport:
    ok: bool
    violations: tuple[str, ...]

    def __bool__(self) -> bool:
        return self.ok


def kkt_verify(
    demand: DemandProfile,
    result: AllocationResult,
    alpha: float,
    tol: float = 1e-6,
) -> KKTReport:
    """Check stationarity, complementary slackness and clearance.

    Interior households need ``|x**(-alpha) - lam| <= tol * lam``; households
    at their demand need ``d**(-alpha) >= (1 - tol) * lam``. The comparison is
    done on logarithms so that huge alpha does not overflow.

    Raises:
        NotApplicableError: if the result carries no dual price.
    """
    a = validate_alpha(alpha)
    if result.log_dual_price is None and result.dual_price is None:
        raise NotApplicableError(f"{result.method.value} result has no dual price")
    if a == 0:
        raise NotApplicableError("KKT check needs alpha > 0")
    log_lam = result.log_dual_price
    if log_lam is None:
        log_lam = math.log(result.dual_price) if result.dual_price > 0 else -math.inf
    x = result.allocations
    d = demand.demands
    violations: list[str] = []
    if x.shape != d.shape:
        return KKTReport(False, (f"{x.size} allocations for {d.size} households",))

    for i in np.flatnonzero(x < 0):
        violations.append(f"x_{i + 1} < 0")
    for i in np.flatnonzero(x > d):
        violations.append(f"x_{i + 1} > d_{i + 1}")

    pos = d > 0
    for i in np.flatnonzero(pos & (x == 0)):
        violations.append(f"x_{i + 1} = 0 with positive demand; marginal utility is unbounded")

    interior = pos & (x > 0) & (x < d)
    if interior.any():
        gap = np.expm1(-a * np.log(x[interior]) - log_lam)
        for j in np.flatnonzero(np.abs(gap) > tol):
            i = int(np.flatnonzero(interior)[j])
            violations.append(f"stationarity fails at household {i + 1}: relative gap {gap[j]:.3g}")

    at_cap = pos & (x == d)
    if at_cap.any():
        lhs = -a * np.log(d[at_cap])
        rhs = log_lam + math.log1p(-tol)
        for j in np.flatnonzero(lhs < rhs):
            i = int(np.flatnonzero(at_cap)[j])
            violations.append(f"saturated household {i + 1} has marginal utility below the price")

    residual = abs(float(x.sum()) - result.supply)
    if residual > tol * max(result.supply, 1.0):
        violations.append(f"clearance residual {residual:.3g} exceeds tolerance")
    return KKTReport(not violations, tuple(violations))
