"""Command-line entry point.

Subcommands:
    allocate  solve one instance with one method
    sweep     run an experiment grid and write a JSON or CSV report
    bench     time the welfare solver on synthetic binomial demands
    ingest    clean an hourly load CSV and aggregate one day into a profile

Exit codes: 0 success, 1 input error, 2 solver failure (allocate only).
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from softshed.allocators import SolverConfig, kkt_verify
from softshed.experiments import (
    ExperimentGrid,
    allocate,
    emit_benchmark,
    emit_report,
    run_grid,
    runtime_benchmark,
    scaling_exponent,
)
from softshed.ingest import (
    ColumnMap,
    IngestError,
    aggregate_day,
    drop_incomplete_consumers,
    parse_load_csv,
    read_profile_csv,
    synthesize_demands,
    write_profile_csv,
)
from softshed.metrics import TariffSchedule, percentile_threshold, satisfaction_report, total_revenue
from softshed.model import ConvergenceError, DemandProfile, Method, SupplySpec

log = logging.getLogger("softshed")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_SOLVER = 2


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _methods(text: str) -> list[Method]:
    try:
        return [Method(v.strip()) for v in text.split(",") if v.strip()]
    except ValueError:
        choices = ", ".join(m.value for m in Method)
        raise argparse.ArgumentTypeError(f"methods must be among {choices}") from None


def _write(data: bytes, output: Optional[str]) -> None:
    if output in (None, "-"):
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        Path(output).write_bytes(data)
        log.info("wrote %s", output)


def _add_profile_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", help="profile CSV (household_id,demand_kwh), as written by 'ingest'")
    p.add_argument("--synthetic", choices=["binomial", "uniform"], default="uniform",
                   help="distribution for a synthetic profile when --input is absent (default: uniform)")
    p.add_argument("--households", type=int, default=100, help="synthetic profile size (default: 100)")
    p.add_argument("--seed", type=int, default=0, help="seed for synthetic profiles (default: 0)")


def _load_profile(args: argparse.Namespace) -> DemandProfile:
    if args.input:
        return read_profile_csv(args.input)
    return synthesize_demands(args.synthetic, args.households, args.seed)


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors; exit status 2 is reserved for solver failure
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="softshed", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("allocate", help="solve one instance")
    _add_profile_args(p)
    p.add_argument("--method", type=Method, choices=list(Method), default=Method.ALPHA_FAIR)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--max-bisection-iters", type=int, default=SolverConfig.max_bisection_iters)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--shortfall", type=float, help="fraction of total demand that is not supplied")
    g.add_argument("--supply", type=float, help="supplied fraction of total demand")
    g.add_argument("--supply-kwh", type=float, help="absolute supply in kWh")
    p.add_argument("--tariff-prices", type=_floats, default=[10.0, 20.0])
    p.add_argument("--tariff-percentiles", type=_floats, default=[50.0],
                   help="block threshold as a demand percentile (first value used)")
    p.add_argument("--format", choices=["json"], default="json")
    p.add_argument("--output")

    p = sub.add_parser("sweep", help="run an experiment grid")
    _add_profile_args(p)
    p.add_argument("--method", type=_methods, default=list(Method), help="comma-separated methods")
    p.add_argument("--alpha", type=_floats, default=[0.0, 0.5, 1.0, 10000.0])
    g = p.add_mutually_exclusive_group()
    g.add_argument("--shortfall", type=_floats, help="comma-separated shortfall fractions")
    g.add_argument("--supply", type=_floats, help="comma-separated supply fractions")
    p.add_argument("--tariff-prices", type=_floats, default=[10.0, 20.0])
    p.add_argument("--tariff-percentiles", type=_floats, default=[10.0, 50.0, 90.0])
    p.add_argument("--no-timing", action="store_true", help="omit solve times for byte-reproducible output")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--output")

    p = sub.add_parser("bench", help="time the welfare solver")
    p.add_argument("--sizes", type=_ints, default=[1000, 10000, 100000, 1000000])
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--shortfall", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--format", choices=["json", "csv"], default="csv")
    p.add_argument("--output")

    p = sub.add_parser("ingest", help="clean a load CSV and aggregate one day")
    p.add_argument("--input", required=True)
    p.add_argument("--day", type=dt.date.fromisoformat, help="YYYY-MM-DD; random complete day if absent")
    p.add_argument("--seed", type=int, default=0, help="seed for the random day (default: 0)")
    p.add_argument("--id-column", default="consumer_id")
    p.add_argument("--time-column", default="timestamp")
    p.add_argument("--kwh-column", default="kwh")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--report", help="write the cleaning report here")
    p.add_argument("--output")
    return parser


def _cmd_allocate(args: argparse.Namespace) -> int:
    profile = _load_profile(args)
    if args.supply_kwh is not None:
        supply = SupplySpec(supply=args.supply_kwh)
    elif args.supply is not None:
        supply = SupplySpec.from_shortfall(1.0 - args.supply)
    else:
        supply = SupplySpec.from_shortfall(0.2 if args.shortfall is None else args.shortfall)
    try:
        cfg = SolverConfig(max_bisection_iters=args.max_bisection_iters)
        res = allocate(profile, supply, args.method, args.alpha, cfg)
    except ConvergenceError as exc:
        log.error("solver failed: %s (last price %g, residual %g)", exc, exc.dual_price, exc.residual)
        return EXIT_SOLVER
    q = args.tariff_percentiles[0]
    if len(args.tariff_prices) == 1:
        tariff = TariffSchedule.flat(args.tariff_prices[0])
    else:
        tariff = TariffSchedule.two_block(percentile_threshold(profile, q), args.tariff_prices[:2])
    sat = satisfaction_report(res, profile)
    doc = {
        "method": res.method.value,
        "alpha": args.alpha if res.method is Method.ALPHA_FAIR else None,
        "supply_kwh": res.supply,
        "clearance_residual": res.clearance_residual,
        "iterations": res.iterations,
        "dual_price": res.dual_price if res.dual_price is not None and res.dual_price < float("inf") else None,
        "log_dual_price": res.log_dual_price,
        "kkt_ok": bool(kkt_verify(profile, res, args.alpha)) if res.log_dual_price is not None else None,
        "total_revenue": total_revenue(res, tariff),
        "level_distribution": {lv.name: v for lv, v in sat.distribution.items()},
        "allocations": [
            {"household_id": str(h), "demand_kwh": float(d), "allocation_kwh": float(x)}
            for h, d, x in zip(profile.household_ids, profile.demands, res.allocations)
        ],
    }
    _write((json.dumps(doc, indent=2) + "\n").encode(), args.output)
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    profile = _load_profile(args)
    if args.supply is not None:
        shortfalls, mode = [1.0 - s for s in args.supply], "supply"
    else:
        shortfalls, mode = args.shortfall or [0.05, 0.10, 0.20, 0.40], "shortfall"
    grid = ExperimentGrid(
        alphas=tuple(args.alpha),
        shortfalls=tuple(shortfalls),
        tariff_percentiles=tuple(args.tariff_percentiles),
        methods=tuple(args.method),
        seed=args.seed,
        tariff_prices=tuple(args.tariff_prices),
        supply_mode=mode,
    )
    report = run_grid(profile, grid, timing=not args.no_timing)
    failed = sum(r.error is not None for r in report.records)
    if failed:
        log.warning("%d cells failed; see the error field", failed)
    _write(emit_report(report, args.format), args.output)
    return EXIT_OK


def _cmd_bench(args: argparse.Namespace) -> int:
    rows = runtime_benchmark(args.sizes, args.alpha, args.shortfall, args.seed, args.repeats)
    if len(rows) > 1:
        log.info("scaling exponent %.3f", scaling_exponent(rows))
    _write(emit_benchmark(rows, args.format), args.output)
    return EXIT_OK


def _cmd_ingest(args: argparse.Namespace) -> int:
    cols = ColumnMap(args.id_column, args.time_column, args.kwh_column)
    table = drop_incomplete_consumers(parse_load_csv(args.input, cols, args.delimiter))
    log.info("%d consumers x %d hours after cleaning", *table.shape)
    if args.report:
        Path(args.report).write_text(table.report.to_text())
    profile = aggregate_day(table, args.day, seed=None if args.day else args.seed)
    _write(write_profile_csv(profile), args.output)
    return EXIT_OK


COMMANDS = {"allocate": _cmd_allocate, "sweep": _cmd_sweep, "bench": _cmd_bench, "ingest": _cmd_ingest}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (IngestError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
