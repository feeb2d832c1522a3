"""Experiment harness: allocation sweeps, revenue and satisfaction reports,
and the solver runtime benchmark."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from softshed import allocators
from softshed.ingest import synthesize_demands
from softshed.metrics import Level, TariffSchedule, percentile_threshold, satisfaction_report, total_revenue
from softshed.model import AllocationResult, DemandProfile, Method, SupplySpec

SCHEMA_VERSION = "1"
SIG_DIGITS = 9
MIN_SAMPLE_SECONDS = 0.02
CSV_HEADER = (
    "method", "alpha", "shortfall", "percentile",
    "L1", "L2", "L3", "L4", "L5",
    "revenue", "dual_price", "solve_time_s",
)
METHOD_ORDER = {m: i for i, m in enumerate(Method)}


@dataclass(frozen=True)
class ExperimentGrid:
    """Sweep over fairness parameter, shortfall and tariff threshold.

    ``supply_mode`` only records how the user phrased the sweep: ``"supply"``
    means the shortfalls were given as supply fractions ``1 - shortfall``.
    """

    alphas: tuple[float, ...] = (0.0, 0.5, 1.0, 10000.0)
    shortfalls: tuple[float, ...] = (0.05, 0.10, 0.20, 0.40)
    tariff_percentiles: tuple[float, ...] = (10.0, 50.0, 90.0)
    methods: tuple[Method, ...] = tuple(Method)
    seed: int = 0
    tariff_prices: tuple[float, ...] = (10.0, 20.0)
    supply_mode: str = "shortfall"

    def __post_init__(self) -> None:
        for name in ("alphas", "shortfalls", "tariff_percentiles", "methods", "tariff_prices"):
            value = tuple(getattr(self, name))
            if not value:
                raise ValueError(f"{name} must not be empty")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "methods", tuple(Method(m) for m in self.methods))
        if any(a < 0 or not math.isfinite(a) for a in self.alphas):
            raise ValueError("alphas must be finite and non-negative")
        if any(not 0 <= f < 1 for f in self.shortfalls):
            raise ValueError("shortfalls must lie in [0, 1)")
        if any(not 0 <= q <= 100 for q in self.tariff_percentiles):
            raise ValueError("tariff percentiles must lie in [0, 100]")
        if len(self.tariff_prices) not in (1, 2):
            raise ValueError("sweeps support a flat tariff (one price) or two blocks (two prices)")
        if self.supply_mode not in ("shortfall", "supply"):
            raise ValueError(f"unknown supply_mode {self.supply_mode!r}")

    def tariff(self, profile: DemandProfile, q: float) -> TariffSchedule:
        if len(self.tariff_prices) == 1:
            return TariffSchedule.flat(self.tariff_prices[0])
        return TariffSchedule.two_block(percentile_threshold(profile, q), self.tariff_prices)

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["methods"] = [m.value for m in self.methods]
        return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}


@dataclass(frozen=True)
class ExperimentRecord:
    method: Method
    alpha: float
    shortfall: float
    percentile: float
    level_distribution: dict[Level, float] = field(default_factory=dict)
    total_revenue: Optional[float] = None
    dual_price: Optional[float] = None
    log_dual_price: Optional[float] = None
    solve_time: Optional[float] = None
    error: Optional[str] = None

    @property
    def key(self) -> tuple:
        return (METHOD_ORDER[self.method], self.alpha, self.shortfall, self.percentile)


@dataclass(frozen=True)
class ExperimentReport:
    records: tuple[ExperimentRecord, ...]
    metadata: dict[str, Any]

    def select(self, **match: Any) -> list[ExperimentRecord]:
        return [r for r in self.records if all(getattr(r, k) == v for k, v in match.items())]


def dataset_digest(profile: DemandProfile) -> str:
    h = hashlib.sha256()
    h.update(repr(profile.household_ids).encode())
    h.update(np.ascontiguousarray(profile.demands, dtype="<f8").tobytes())
    return h.hexdigest()


def allocate(
    profile: DemandProfile,
    supply: SupplySpec,
    method: Method,
    alpha: float = 1.0,
    cfg: Optional[allocators.SolverConfig] = None,
) -> AllocationResult:
    """Dispatch one allocation by method name; alpha only matters for the welfare solver."""
    method = Method(method)
    if method is Method.ALPHA_FAIR:
        return allocators.alpha_fair(profile, supply, alpha, cfg)
    if method is Method.MAX_MIN:
        return allocators.max_min_fair(profile, supply)
    if method is Method.EQUITABLE:
        return allocators.equitable(profile, supply)
    return allocators.percentage_equitable(profile, supply)


def run_grid(profile: DemandProfile, grid: ExperimentGrid, timing: bool = True) -> ExperimentReport:
    """Allocate and score every (method, alpha, shortfall, percentile) cell.

    Baseline methods ignore alpha, so their allocation is solved once per
    shortfall and repeated under each alpha. A failing solve is recorded in
    the cell's ``error`` field and the sweep continues. With ``timing`` off
    the solve times are left out, making the report byte-reproducible.
    """
    tariffs = {q: grid.tariff(profile, q) for q in grid.tariff_percentiles}
    records: list[ExperimentRecord] = []
    cache: dict[tuple, tuple[Optional[AllocationResult], float, Optional[str]]] = {}
    for method in grid.methods:
        for alpha in grid.alphas:
            for f in grid.shortfalls:
                ckey = (method, alpha if method is Method.ALPHA_FAIR else None, f)
                if ckey not in cache:
                    t0 = time.perf_counter()
                    try:
                        res, err = allocate(profile, SupplySpec.from_shortfall(f), method, alpha), None
                    except (ValueError, RuntimeError) as exc:
                        res, err = None, f"{type(exc).__name__}: {exc}"
                    cache[ckey] = (res, time.perf_counter() - t0, err)
                res, elapsed, err = cache[ckey]
                dist = satisfaction_report(res, profile).distribution if res is not None else {}
                for q in grid.tariff_percentiles:
                    records.append(
                        ExperimentRecord(
                            method=method,
                            alpha=float(alpha),
                            shortfall=float(f),
                            percentile=float(q),
                            level_distribution=dist,
                            total_revenue=total_revenue(res, tariffs[q]) if res is not None else None,
                            dual_price=None if res is None else res.dual_price,
                            log_dual_price=None if res is None else res.log_dual_price,
                            solve_time=elapsed if timing else None,
                            error=err,
                        )
                    )
    records.sort(key=lambda r: r.key)
    metadata = {
        "schema_version": SCHEMA_VERSION,
        "dataset_digest": dataset_digest(profile),
        "n_households": profile.n,
        "total_demand_kwh": profile.total,
        "seed": grid.seed,
        "supply_mode": grid.supply_mode,
        "timing": timing,
        "grid": grid.to_dict(),
    }
    return ExperimentReport(tuple(records), metadata)


def _num(v: Optional[float]) -> Optional[float]:
    """Round to the serialization precision; non-finite becomes None."""
    if v is None or not math.isfinite(v):
        return None
    return float(format(v, f".{SIG_DIGITS}g"))


def _cell(v: Optional[float]) -> str:
    if v is None:
        return ""
    if not math.isfinite(v):
        return "inf" if v > 0 else "-inf" if v < 0 else "nan"
    return format(v, f".{SIG_DIGITS}g")


def _record_dict(r: ExperimentRecord) -> dict[str, Any]:
    return {
        "method": r.method.value,
        "alpha": _num(r.alpha),
        "shortfall": _num(r.shortfall),
        "percentile": _num(r.percentile),
        "level_distribution": {lv.name: _num(r.level_distribution.get(lv, 0.0)) for lv in Level}
        if r.level_distribution
        else None,
        "total_revenue": _num(r.total_revenue),
        "dual_price": _num(r.dual_price),
        "log_dual_price": _num(r.log_dual_price),
        "solve_time": _num(r.solve_time),
        "error": r.error,
    }


def _round_meta(value: Any) -> Any:
    if isinstance(value, float):
        return _num(value)
    if isinstance(value, dict):
        return {k: _round_meta(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round_meta(v) for v in value]
    return value


def emit_report(report: ExperimentReport, fmt: str = "json") -> bytes:
    """Serialize a report; equal reports always give identical bytes.

    Floats are rounded to nine significant digits. CSV has one row per
    record; cells with a failed solve leave the numeric columns empty.
    """
    records = sorted(report.records, key=lambda r: r.key)
    if fmt == "json":
        doc = {"metadata": _round_meta(report.metadata), "records": [_record_dict(r) for r in records]}
        return (json.dumps(doc, indent=2, allow_nan=False) + "\n").encode("utf-8")
    if fmt == "csv":
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            levels = [_cell(r.level_distribution[lv]) if r.level_distribution else "" for lv in Level]
            w.writerow(
                [r.method.value, _cell(r.alpha), _cell(r.shortfall), _cell(r.percentile), *levels,
                 _cell(r.total_revenue), _cell(r.dual_price), _cell(r.solve_time)]
            )
        return out.getvalue().encode("utf-8")
    raise ValueError(f"unknown format {fmt!r}")


@dataclass(frozen=True)
class BenchmarkRow:
    n: int
    seconds: float
    allocation_digest: str


def runtime_benchmark(
    sizes: Sequence[int],
    alpha: float = 2.0,
    shortfall: float = 0.2,
    seed: int = 0,
    repeats: int = 5,
    solver: Callable[[DemandProfile, SupplySpec, float], AllocationResult] = allocators.alpha_fair,
) -> list[BenchmarkRow]:
    """Median solve time per size on synthetic binomial demands.

    Profiles are drawn before timing starts; only the solve is timed. Each of
    the ``repeats`` samples averages enough back-to-back solves to span at
    least ``MIN_SAMPLE_SECONDS``, so microsecond solves are not lost in timer
    and scheduler noise. Each row also carries a digest of the allocation so
    repeated runs can be compared for identical output.
    """
    sizes = [int(n) for n in sizes]
    if not sizes or any(n < 1 for n in sizes):
        raise ValueError("sizes must be positive")
    if sizes != sorted(sizes):
        raise ValueError("sizes must be ascending")
    rows = []
    supply = SupplySpec.from_shortfall(shortfall)
    for n in sizes:
        profile = synthesize_demands("binomial", n, seed)
        t0 = time.perf_counter()
        res = solver(profile, supply, alpha)
        once = time.perf_counter() - t0
        loops = max(1, math.ceil(MIN_SAMPLE_SECONDS / max(once, 1e-9)))
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            for _ in range(loops):
                res = solver(profile, supply, alpha)
            times.append((time.perf_counter() - t0) / loops)
        digest = hashlib.sha256(np.ascontiguousarray(res.allocations, dtype="<f8").tobytes()).hexdigest()
        rows.append(BenchmarkRow(n, statistics.median(times), digest))
    return rows


def scaling_exponent(rows: Sequence[BenchmarkRow]) -> float:
    """Least-squares slope of log(time) against log(N)."""
    if len(rows) < 2:
        raise ValueError("need at least two sizes")
    n = np.log([r.n for r in rows])
    t = np.log([max(r.seconds, 1e-12) for r in rows])
    return float(np.polyfit(n, t, 1)[0])


def emit_benchmark(rows: Sequence[BenchmarkRow], fmt: str = "csv") -> bytes:
    if fmt == "json":
        doc = [{"n": r.n, "seconds": _num(r.seconds), "allocation_digest": r.allocation_digest} for r in rows]
        return (json.dumps(doc, indent=2) + "\n").encode("utf-8")
    if fmt == "csv":
        lines = ["n,seconds,allocation_digest"] + [f"{r.n},{_cell(r.seconds)},{r.allocation_digest}" for r in rows]
        return ("\n".join(lines) + "\n").encode("utf-8")
    raise ValueError(f"unknown format {fmt!r}")
