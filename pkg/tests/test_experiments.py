from __future__ import annotations

import csv
import io
import json

import numpy as np
import pytest

from softshed.allocators import alpha_fair
from softshed.experiments import (
    CSV_HEADER,
    SCHEMA_VERSION,
    ExperimentGrid,
    allocate,
    dataset_digest,
    emit_benchmark,
    emit_report,
    run_grid,
    runtime_benchmark,
    scaling_exponent,
)
from softshed.ingest import synthesize_demands
from softshed.metrics import Level
from softshed.model import DemandProfile, Method, SupplySpec


@pytest.fixture(scope="module")
def profile():
    return synthesize_demands("uniform", 100, seed=0)


@pytest.fixture(scope="module")
def report(profile):
    return run_grid(profile, ExperimentGrid(), timing=False)


def test_default_cardinality(report):
    assert len(report.records) == 4 * 4 * 3 * 4 == 192
    assert all(r.error is None for r in report.records)


def test_csv_rows(report):
    rows = list(csv.reader(io.StringIO(emit_report(report, "csv").decode())))
    assert tuple(rows[0]) == CSV_HEADER
    assert len(rows) == 193


def test_json_schema(report, profile):
    doc = json.loads(emit_report(report, "json"))
    assert doc["metadata"]["schema_version"] == SCHEMA_VERSION
    assert doc["metadata"]["dataset_digest"] == dataset_digest(profile)
    assert len(doc["records"]) == 192
    assert list(doc["records"][0]) == [
        "method", "alpha", "shortfall", "percentile", "level_distribution",
        "total_revenue", "dual_price", "log_dual_price", "solve_time", "error",
    ]


def test_emit_is_byte_stable(report, profile):
    again = run_grid(profile, ExperimentGrid(), timing=False)
    for fmt in ("json", "csv"):
        assert emit_report(report, fmt) == emit_report(report, fmt)
        assert emit_report(report, fmt) == emit_report(again, fmt)


def test_zero_shortfall_cell(profile):
    rep = run_grid(profile, ExperimentGrid(shortfalls=(0.0,)), timing=False)
    rows = list(csv.reader(io.StringIO(emit_report(rep, "csv").decode())))[1:]
    revenues = {row[9] for row in rows if row[3] == "50"}
    assert len(revenues) == 1
    for r in rep.records:
        assert r.level_distribution[Level.L5] == 100


def test_alpha_one_cells_match_filling(report):
    for f in ExperimentGrid().shortfalls:
        a1 = report.select(method=Method.ALPHA_FAIR, alpha=1.0, shortfall=f)
        mm = report.select(method=Method.MAX_MIN, alpha=1.0, shortfall=f)
        assert a1 and [r.level_distribution for r in a1] == [r.level_distribution for r in mm]


def test_revenue_monotone(report):
    grid = ExperimentGrid()
    for m in grid.methods:
        for a in grid.alphas:
            for f in grid.shortfalls:
                revs = [r.total_revenue for r in report.select(method=m, alpha=a, shortfall=f)]
                assert all(x >= y - 1e-9 for x, y in zip(revs, revs[1:]))
            for q in grid.tariff_percentiles:
                revs = [r.total_revenue for r in report.select(method=m, alpha=a, percentile=q)]
                assert all(x >= y - 1e-9 for x, y in zip(revs, revs[1:]))


def test_empty_methods_rejected():
    with pytest.raises(ValueError):
        ExperimentGrid(methods=())


@pytest.mark.parametrize("kw", [
    {"shortfalls": (1.0,)}, {"alphas": (-1.0,)}, {"tariff_percentiles": (101.0,)},
    {"tariff_prices": (1.0, 2.0, 3.0)}, {"supply_mode": "other"},
])
def test_grid_validation(kw):
    with pytest.raises(ValueError):
        ExperimentGrid(**kw)


def test_flat_tariff_sweep(profile):
    rep = run_grid(profile, ExperimentGrid(tariff_prices=(10.0,)), timing=False)
    for r in rep.records:
        assert r.total_revenue == pytest.approx(10 * (1 - r.shortfall) * profile.total, rel=1e-9)


def test_failed_cell_recorded(monkeypatch, profile):
    import softshed.experiments as ex

    def boom(*args, **kwargs):
        raise RuntimeError("no convergence")

    monkeypatch.setattr(ex.allocators, "alpha_fair", boom)
    rep = run_grid(profile, ExperimentGrid(alphas=(1.0,), shortfalls=(0.2,)), timing=False)
    bad = rep.select(method=Method.ALPHA_FAIR)
    assert bad and all(r.error == "RuntimeError: no convergence" for r in bad)
    assert all(r.error is None for r in rep.select(method=Method.MAX_MIN))
    text = emit_report(rep, "csv").decode()
    assert "alpha_fair,1,0.2,50,,,,,,,," in text


def test_non_finite_serialization():
    p = DemandProfile.from_demands([2, 4, 6])
    rep = run_grid(p, ExperimentGrid(alphas=(10000.0,), shortfalls=(0.25,), methods=(Method.ALPHA_FAIR,)),
                   timing=False)
    doc = json.loads(emit_report(rep, "json"))
    assert doc["records"][0]["dual_price"] == 0.0
    assert doc["records"][0]["log_dual_price"] < -1000


def test_allocate_dispatch():
    p = DemandProfile.from_demands([2, 4, 6])
    s = SupplySpec(supply=9.0)
    for m in Method:
        assert allocate(p, s, m, 1.0).method is m


class TestBenchmark:
    def test_rows_and_determinism(self):
        a = runtime_benchmark([1000, 10000], repeats=1)
        b = runtime_benchmark([1000, 10000], repeats=1)
        assert [r.n for r in a] == [1000, 10000]
        assert [r.allocation_digest for r in a] == [r.allocation_digest for r in b]

    def test_single_size(self):
        (row,) = runtime_benchmark([1])
        assert row.n == 1 and row.seconds < 0.1

    def test_sizes_ascending(self):
        with pytest.raises(ValueError):
            runtime_benchmark([100, 10])

    def test_exponent_fit(self):
        from softshed.experiments import BenchmarkRow

        rows = [BenchmarkRow(n, 1e-6 * n, "") for n in (10, 100, 1000)]
        assert scaling_exponent(rows) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            scaling_exponent(rows[:1])

    def test_emit(self):
        rows = runtime_benchmark([10], repeats=1)
        assert emit_benchmark(rows, "csv").startswith(b"n,seconds,allocation_digest\n10,")
        assert json.loads(emit_benchmark(rows, "json"))[0]["n"] == 10

    def test_custom_solver(self):
        rows = runtime_benchmark([50], repeats=1, solver=lambda p, s, a: alpha_fair(p, s, a))
        assert len(rows[0].allocation_digest) == 64
