"""Smart-meter load ingestion.

Input is long-format delimited text, one reading per row, with a consumer
id, an hour-resolution ISO-8601 timestamp and a kWh value. Readings are
laid out on a dense consumers x hours grid; absent or unparseable readings
are NaN (never zero, which is a legitimate load).
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import math
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import IO, Hashable, Optional, Union

import numpy as np
from numpy.typing import NDArray

from softshed.model import DemandProfile

MAX_MALFORMED_FRACTION = 0.5
HOUR = np.timedelta64(1, "h")

Source = Union[bytes, str, os.PathLike, IO[bytes], IO[str]]


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class ColumnMap:
    consumer: str = "consumer_id"
    timestamp: str = "timestamp"
    kwh: str = "kwh"


@dataclass(frozen=True)
class RowIssue:
    line: int
    reason: str
    text: str


@dataclass(frozen=True)
class CleaningReport:
    malformed: tuple[RowIssue, ...] = ()
    duplicates: tuple[RowIssue, ...] = ()
    dropped_consumers: tuple[Hashable, ...] = ()

    def to_text(self) -> str:
        lines = [f"malformed rows: {len(self.malformed)}"]
        lines += [f"  line {r.line}: {r.reason}: {r.text}" for r in self.malformed]
        lines.append(f"duplicate readings (first kept): {len(self.duplicates)}")
        lines += [f"  line {r.line}: {r.reason}: {r.text}" for r in self.duplicates]
        lines.append(f"dropped consumers: {len(self.dropped_consumers)}")
        lines += [f"  {c}" for c in self.dropped_consumers]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class LoadTable:
    """Hourly readings for a set of consumers.

    Attributes:
        consumer_ids: Consumer identifiers in first-seen order.
        hourly_kwh: ``len(consumer_ids) x len(timestamps)`` matrix, NaN where
            a reading is missing.
        timestamps: Contiguous ``datetime64[h]`` index.
        report: What was flagged or removed on the way in.
    """

    consumer_ids: tuple[Hashable, ...]
    hourly_kwh: NDArray[np.float64]
    timestamps: NDArray[np.datetime64]
    report: CleaningReport = field(default_factory=CleaningReport)

    def __post_init__(self) -> None:
        m = np.array(self.hourly_kwh, dtype=np.float64)
        ts = np.asarray(self.timestamps, dtype="datetime64[h]")
        if m.shape != (len(self.consumer_ids), ts.size):
            raise ValueError(f"matrix shape {m.shape} does not match {len(self.consumer_ids)} x {ts.size}")
        if ts.size > 1 and not np.all(np.diff(ts) == HOUR):
            raise ValueError("timestamps must be contiguous hours")
        m.setflags(write=False)
        ts.setflags(write=False)
        object.__setattr__(self, "consumer_ids", tuple(self.consumer_ids))
        object.__setattr__(self, "hourly_kwh", m)
        object.__setattr__(self, "timestamps", ts)

    @property
    def missing(self) -> NDArray[np.bool_]:
        return np.isnan(self.hourly_kwh)

    @property
    def shape(self) -> tuple[int, int]:
        return self.hourly_kwh.shape


def _open_text(source: Source) -> tuple[IO[str], bool]:
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8-sig")), True
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8-sig"), True
    if isinstance(source, io.TextIOBase):
        return source, False
    return io.TextIOWrapper(source, encoding="utf-8-sig", newline=""), False


def _parse_hour(text: str) -> np.datetime64:
    stamp = dt.datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    # wall-clock time; the DST fall-back hour then collides and is flagged
    stamp = stamp.replace(tzinfo=None)
    if stamp.minute or stamp.second or stamp.microsecond:
        raise ValueError("timestamp is not on the hour")
    return np.datetime64(stamp, "h")


def parse_load_csv(source: Source, columns: ColumnMap = ColumnMap(), delimiter: str = ",") -> LoadTable:
    """Read long-format hourly readings into a :class:`LoadTable`.

    Rows with a bad field count, consumer id or timestamp are skipped and
    listed in the report. A non-numeric or negative kWh cell keeps its slot
    as a missing reading and is listed too. A repeated (consumer, hour) keeps
    the first reading.

    Raises:
        IngestError: if the header lacks a mapped column, no reading parses,
            or more than half of the rows are malformed.
    """
    fh, owned = _open_text(source)
    try:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestError("empty input: no header row") from None
        try:
            ci = header.index(columns.consumer)
            ti = header.index(columns.timestamp)
            ki = header.index(columns.kwh)
        except ValueError:
            raise IngestError(
                f"header {header!r} lacks one of {columns.consumer!r}, {columns.timestamp!r}, {columns.kwh!r}"
            ) from None

        malformed: list[RowIssue] = []
        duplicates: list[RowIssue] = []
        ids: dict[str, int] = {}
        rows: list[int] = []
        hours: list[np.datetime64] = []
        values: list[float] = []
        seen: set[tuple[int, np.datetime64]] = set()
        n_rows = 0
        for line, rec in enumerate(reader, start=2):
            if not rec or (len(rec) == 1 and not rec[0].strip()):
                continue
            n_rows += 1
            text = delimiter.join(rec)
            if len(rec) != len(header):
                malformed.append(RowIssue(line, f"expected {len(header)} fields, got {len(rec)}", text))
                continue
            cid = rec[ci].strip()
            if not cid:
                malformed.append(RowIssue(line, "empty consumer id", text))
                continue
            try:
                hour = _parse_hour(rec[ti])
            except ValueError as exc:
                malformed.append(RowIssue(line, f"bad timestamp ({exc})", text))
                continue
            try:
                kwh = float(rec[ki])
                if not math.isfinite(kwh) or kwh < 0:
                    raise ValueError
            except ValueError:
                malformed.append(RowIssue(line, "unreadable kWh, stored as missing", text))
                kwh = math.nan
            row = ids.setdefault(cid, len(ids))
            if (row, hour) in seen:
                duplicates.append(RowIssue(line, "repeated consumer/hour", text))
                continue
            seen.add((row, hour))
            rows.append(row)
            hours.append(hour)
            values.append(kwh)
    finally:
        if owned:
            fh.close()

    if n_rows and len(malformed) > MAX_MALFORMED_FRACTION * n_rows:
        sample = "; ".join(f"line {r.line}: {r.reason}" for r in malformed[:5])
        raise IngestError(f"{len(malformed)} of {n_rows} rows malformed (e.g. {sample})")
    if not values:
        raise IngestError("no readings parsed")

    h = np.array(hours, dtype="datetime64[h]")
    start, stop = h.min(), h.max()
    timestamps = np.arange(start, stop + HOUR, HOUR)
    matrix = np.full((len(ids), timestamps.size), np.nan)
    matrix[np.array(rows), ((h - start) // HOUR).astype(np.int64)] = values
    return LoadTable(
        consumer_ids=tuple(ids),
        hourly_kwh=matrix,
        timestamps=timestamps,
        report=CleaningReport(tuple(malformed), tuple(duplicates)),
    )


def serialize_load_csv(table: LoadTable, columns: ColumnMap = ColumnMap(), delimiter: str = ",") -> bytes:
    """Write present readings back in long format, consumer-major."""
    out = io.StringIO()
    w = csv.writer(out, delimiter=delimiter, lineterminator="\n")
    w.writerow([columns.consumer, columns.timestamp, columns.kwh])
    stamps = [str(t) + ":00:00" for t in table.timestamps]
    for cid, row in zip(table.consumer_ids, table.hourly_kwh):
        for stamp, v in zip(stamps, row):
            if not math.isnan(v):
                w.writerow([cid, stamp, repr(float(v))])
    return out.getvalue().encode("utf-8")


def drop_incomplete_consumers(table: LoadTable) -> LoadTable:
    """Keep only consumers with no missing reading; removed ids go to the report."""
    complete = ~table.missing.any(axis=1)
    if not complete.any():
        raise IngestError("every consumer has missing readings")
    dropped = tuple(c for c, ok in zip(table.consumer_ids, complete) if not ok)
    return LoadTable(
        consumer_ids=tuple(c for c, ok in zip(table.consumer_ids, complete) if ok),
        hourly_kwh=table.hourly_kwh[complete],
        timestamps=table.timestamps,
        report=replace(table.report, dropped_consumers=table.report.dropped_consumers + dropped),
    )


def _day_columns(table: LoadTable, day: dt.date) -> tuple[NDArray[np.int64], list[str]]:
    first = np.datetime64(day, "h")
    wanted = first + np.arange(24) * HOUR
    idx = ((wanted - table.timestamps[0]) // HOUR).astype(np.int64)
    inside = (idx >= 0) & (idx < table.timestamps.size)
    gaps = [str(t) for t in wanted[~inside]]
    cols = idx[inside]
    holes = table.missing[:, cols].any(axis=0)
    gaps += [str(t) for t in wanted[inside][holes]]
    return idx, sorted(gaps)


def complete_days(table: LoadTable) -> list[dt.date]:
    """Calendar days with all 24 readings present for every consumer."""
    ok = ~table.missing.any(axis=0)
    days, counts = np.unique(table.timestamps[ok].astype("datetime64[D]"), return_counts=True)
    return [d.astype(dt.date) for d in days[counts == 24]]


def select_day(table: LoadTable, seed: int) -> dt.date:
    """Pick one complete day uniformly at random under ``seed``."""
    days = complete_days(table)
    if not days:
        raise IngestError("no fully covered day in the table")
    return days[int(np.random.default_rng(seed).integers(len(days)))]


def aggregate_day(table: LoadTable, day: Optional[dt.date] = None, *, seed: Optional[int] = None) -> DemandProfile:
    """Sum each consumer's 24 readings of ``day`` (or a seeded random day).

    Raises:
        IngestError: naming the missing hours when the day is not fully
            covered for every consumer.
    """
    if day is None:
        if seed is None:
            raise ValueError("give a day or a seed")
        day = select_day(table, seed)
    idx, gaps = _day_columns(table, day)
    if gaps:
        raise IngestError(f"day {day} is incomplete; missing hours: {', '.join(gaps)}")
    return DemandProfile(table.consumer_ids, table.hourly_kwh[:, idx].sum(axis=1))


class Category(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


@dataclass(frozen=True)
class Categorization:
    thresholds: tuple[float, float]
    categories: dict[Hashable, Category]


def categorize_consumers(demand: DemandProfile) -> Categorization:
    """Split consumers into thirds of the largest demand."""
    top = float(demand.demands.max())
    if not top > 0:
        raise ValueError("cannot categorize all-zero demands")
    t1 = top / 3
    t2 = 2 * t1
    cats = {}
    for cid, v in zip(demand.household_ids, demand.demands):
        cats[cid] = Category.LOW if v <= t1 else Category.MEDIUM if v <= t2 else Category.HIGH
    return Categorization((t1, t2), cats)


def synthesize_demands(dist: str, n: int, seed: int, **params: float) -> DemandProfile:
    """Draw ``n`` synthetic household demands.

    ``binomial`` takes ``trials`` (default 100) and ``p`` (0.5); zero draws are
    redrawn so every demand is positive. ``uniform`` takes ``low`` (1.0) and
    ``high`` (10.0).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    if dist == "binomial":
        trials = int(params.pop("trials", 100))
        p = float(params.pop("p", 0.5))
        if params:
            raise ValueError(f"unexpected parameters {sorted(params)}")
        if trials < 1 or not 0 < p <= 1:
            raise ValueError("binomial needs trials >= 1 and 0 < p <= 1")
        d = rng.binomial(trials, p, size=n).astype(np.float64)
        for _ in range(1000):
            zero = d == 0
            if not zero.any():
                break
            d[zero] = rng.binomial(trials, p, size=int(zero.sum()))
        else:
            raise ValueError("binomial parameters almost always draw zero")
    elif dist == "uniform":
        low = float(params.pop("low", 1.0))
        high = float(params.pop("high", 10.0))
        if params:
            raise ValueError(f"unexpected parameters {sorted(params)}")
        if not 0 < low < high:
            raise ValueError("uniform needs 0 < low < high")
        d = rng.uniform(low, high, size=n)
    else:
        raise ValueError(f"unknown distribution {dist!r}")
    return DemandProfile.from_demands(d)


PROFILE_HEADER = ("household_id", "demand_kwh")


def write_profile_csv(profile: DemandProfile) -> bytes:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(PROFILE_HEADER)
    for hid, v in zip(profile.household_ids, profile.demands):
        w.writerow([hid, repr(float(v))])
    return out.getvalue().encode("utf-8")


def read_profile_csv(source: Source) -> DemandProfile:
    """Read a ``household_id,demand_kwh`` profile as written by :func:`write_profile_csv`."""
    fh, owned = _open_text(source)
    try:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if tuple(header) != PROFILE_HEADER:
            raise IngestError(f"profile header must be {','.join(PROFILE_HEADER)}, got {header!r}")
        ids, values = [], []
        for line, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 2:
                raise IngestError(f"line {line}: expected 2 fields, got {len(rec)}")
            try:
                values.append(float(rec[1]))
            except ValueError:
                raise IngestError(f"line {line}: unreadable demand {rec[1]!r}") from None
            ids.append(rec[0])
    finally:
        if owned:
            fh.close()
    if not ids:
        raise IngestError("profile has no households")
    return DemandProfile(tuple(ids), np.array(values))
