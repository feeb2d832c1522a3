"""Reference solvers for testing the production allocators.

Nothing here is called from the production path, and nothing here calls
into :mod:`softshed.allocators`; independence is the point. All three are
slow and meant for small instances.
"""

from __future__ import annotations

import numpy as np

from softshed.model import AllocationResult, DemandProfile, Method, SupplySpec, validate_alpha

GRID_MAX_HOUSEHOLDS = 6
GRID_POINTS_BUDGET = 20_000
# half-width of the zoom window, in cells of the previous lattice
ZOOM_CELLS = 3
MAX_HALVINGS = 80


def _welfare_rows(x: np.ndarray, alpha: float) -> np.ndarray:
    """Welfare of each row of ``x``; -inf where a utility is undefined."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if alpha == 1:
            u = np.log(x)
        else:
            u = np.power(x, 1 - alpha) / (1 - alpha)
        u = np.where(x < 0, -np.inf, u)
        if alpha >= 1:
            u = np.where(x == 0, -np.inf, u)
    return u.sum(axis=1)


def grid_oracle(
    demand: DemandProfile,
    supply: SupplySpec,
    alpha: float,
    resolution: float = 1e-6,
) -> AllocationResult:
    """Brute-force welfare maximization on a lattice, zooming in on the best cell.

    The largest-demand household absorbs the clearance constraint; the others
    are searched on a box lattice. Each round re-centres a window of
    ``ZOOM_CELLS`` cells either side of the best feasible point and
    re-lattices it, until the spacing is below ``resolution``.
    """
    a = validate_alpha(alpha)
    d = demand.demands
    S = supply.amount(demand)
    if d.size > GRID_MAX_HOUSEHOLDS:
        raise ValueError(f"grid oracle supports at most {GRID_MAX_HOUSEHOLDS} households, got {d.size}")
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    pos = np.flatnonzero(d > 0)
    x = np.zeros_like(d)
    if pos.size == 1:
        x[pos] = S
        return AllocationResult.build(x, Method.ALPHA_FAIR, S, alpha=a, extra={"oracle": "grid"})

    dep = pos[np.argmax(d[pos])]
    free = pos[pos != dep]
    k = free.size
    # no single household can take more than the whole supply
    hi = np.minimum(d[free], S)
    per_dim = max(2 * ZOOM_CELLS + 3, int(GRID_POINTS_BUDGET ** (1.0 / k)))
    if per_dim % 2 == 0:
        per_dim += 1

    lo_box = np.zeros(k)
    hi_box = hi.copy()
    best = None
    best_w = -np.inf
    rounds = 0
    while True:
        rounds += 1
        axes = [np.linspace(lo_box[j], hi_box[j], per_dim) for j in range(k)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k)
        rest = S - pts.sum(axis=1)
        ok = (rest >= 0) & (rest <= d[dep])
        pts, rest = pts[ok], rest[ok]
        if pts.size:
            full = np.column_stack([pts, rest])
            w = _welfare_rows(full, a)
            j = int(np.argmax(w))
            if w[j] >= best_w:
                best_w = float(w[j])
                best = pts[j]
        if best is None:
            raise RuntimeError("grid found no feasible point; increase the budget")
        step = (hi_box - lo_box) / (per_dim - 1)
        if step.max() <= resolution or rounds > 200:
            break
        lo_box = np.maximum(best - ZOOM_CELLS * step, 0.0)
        hi_box = np.minimum(best + ZOOM_CELLS * step, hi)

    x[free] = best
    x[dep] = S - best.sum()
    return AllocationResult.build(
        x, Method.ALPHA_FAIR, S, iterations=rounds, alpha=a, extra={"oracle": "grid", "welfare": best_w}
    )


def project_capped_simplex(y: np.ndarray, d: np.ndarray, S: float) -> np.ndarray:
    """Euclidean projection of ``y`` onto ``{x : sum(x) = S, 0 <= x <= d}``.

    The projection is ``clip(y - tau, 0, d)``. The clipped sum is piecewise
    linear and non-increasing in ``tau`` with breakpoints at ``y`` and
    ``y - d``; ``tau`` is interpolated exactly on the bracketing piece.
    """
    taus = np.unique(np.concatenate([y, y - d]))
    sums = np.clip(y[None, :] - taus[:, None], 0, d).sum(axis=1)
    j = int(np.searchsorted(-sums, -S, side="left"))
    if j == 0:
        tau = taus[0]
    elif j >= taus.size:
        tau = taus[-1]
    else:
        s0, s1 = sums[j - 1], sums[j]
        t0, t1 = taus[j - 1], taus[j]
        tau = t1 if s0 == s1 else t0 + (s0 - S) * (t1 - t0) / (s0 - s1)
    return np.clip(y - tau, 0, d)


def projected_gradient_oracle(
    demand: DemandProfile,
    supply: SupplySpec,
    alpha: float,
    steps: int = 20_000,
    step_size: float = 1.0,
) -> AllocationResult:
    """Projected gradient ascent with backtracking on the welfare objective.

    Starts from the proportional point ``x = d * S / sum(d)`` (strictly
    positive). A trial step is accepted when the welfare slope at the trial
    point, along the step, is still non-negative; by concavity welfare then
    did not drop. Otherwise the step halves. Stops when no step longer than
    1e-14 is accepted within ``MAX_HALVINGS`` halvings.

    Raises:
        RuntimeError: if welfare stops being finite along the ascent.
    """
    a = validate_alpha(alpha)
    if a == 0:
        raise ValueError("projected gradient oracle needs alpha > 0")
    d_all = demand.demands
    S = supply.amount(demand)
    pos = d_all > 0
    d = d_all[pos]
    x = d * (S / d.sum())
    if not np.isfinite(_welfare_rows(x[None, :], a)[0]):
        raise RuntimeError("welfare is not finite at the starting point")
    scale = step_size / float(np.max(np.exp(-a * np.log(x))))
    done = 0
    for done in range(1, steps + 1):
        g = np.exp(-a * np.log(x))
        scale *= 2
        accepted = False
        for _ in range(MAX_HALVINGS):
            y = project_capped_simplex(x + scale * g, d, S)
            step = y - x
            if float(np.max(np.abs(step))) < 1e-14:
                break
            # concavity: a non-negative slope at y means welfare rose all along [x, y]
            if np.all(y > 0) and np.dot(np.exp(-a * np.log(y)), step) >= 0:
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            break
        if not np.isfinite(_welfare_rows(y[None, :], a)[0]):
            raise RuntimeError("projected gradient ascent diverged: welfare is not finite")
        x = y
    out = np.zeros_like(d_all)
    out[pos] = x
    return AllocationResult.build(out, Method.ALPHA_FAIR, S, iterations=done, alpha=a, extra={"oracle": "pgd"})


def reference_progressive_filling(demand: DemandProfile, supply: SupplySpec) -> AllocationResult:
    """Literal event-driven water filling.

    Walks the saturation events in increasing order of demand. At each event
    the common level rises to the next demand if the remaining supply covers
    every unsaturated household; otherwise what is left is split equally
    among them and filling stops.
    """
    d = demand.demands
    S = supply.amount(demand)
    order = sorted(range(d.size), key=lambda i: float(d[i]))
    x = [0.0] * d.size
    level = 0.0
    remaining = S
    events = 0
    for pos, i in enumerate(order):
        unsaturated = d.size - pos
        cost = (float(d[i]) - level) * unsaturated
        if cost > remaining:
            level += remaining / unsaturated
            remaining = 0.0
            for j in order[pos:]:
                x[j] = level
            break
        events += 1
        remaining -= cost
        level = float(d[i])
        x[i] = level
    return AllocationResult.build(np.array(x), Method.MAX_MIN, S, iterations=events, extra={"oracle": "events"})
