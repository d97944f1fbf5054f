"""Call-record and trait-profile ingestion, interval partitioning, activity filter.

Only outgoing calls enter the metrics. Incoming calls are parsed and kept on the
records but :func:`build_networks` ignores them.
"""

from __future__ import annotations

import calendar
import csv
import gzip
import io
import os
import re
from bisect import bisect_right
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import BinaryIO, Iterable, Mapping, Union

from .errors import IngestError

OUTGOING = "outgoing"
INCOMING = "incoming"
DIRECTIONS = (OUTGOING, INCOMING)

TRAITS = (
    "extraversion",
    "agreeableness",
    "conscientiousness",
    "emotional_stability",
    "openness",
)
SCORE_MIN = 15.0
SCORE_MAX = 70.0

CALL_COLUMNS = ("ego_id", "alter_id", "timestamp", "direction", "duration_s")
TRAIT_COLUMNS = ("ego_id",) + TRAITS
SNAPSHOT_COLUMNS = ("ego_id", "interval_index", "alter_id", "call_count")

MAX_MALFORMED_FRACTION = 0.10
DEFAULT_INTERVAL_LENGTH = timedelta(days=153)

Source = Union[str, os.PathLike, bytes, BinaryIO]

_EPOCH_RE = re.compile(r"^[+-]?\d+$")


@dataclass(frozen=True, slots=True)
class CallRecord:
    ego_id: str
    alter_id: str
    timestamp: datetime
    direction: str
    duration_s: int | None = None

    def __post_init__(self) -> None:
        if not self.ego_id or not self.alter_id:
            raise ValueError("empty ego or alter id")
        if self.ego_id == self.alter_id:
            raise ValueError("ego equals alter")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.timestamp.tzinfo is None:
            raise ValueError("timestamp must be timezone-aware")
        if self.duration_s is not None and self.duration_s < 0:
            raise ValueError("negative duration")


@dataclass(frozen=True, slots=True)
class TraitProfile:
    ego_id: str
    extraversion: float
    agreeableness: float
    conscientiousness: float
    emotional_stability: float
    openness: float

    def __post_init__(self) -> None:
        for trait in TRAITS:
            value = getattr(self, trait)
            if not SCORE_MIN <= value <= SCORE_MAX:
                raise ValueError(
                    f"{trait}={value:g} outside [{SCORE_MIN:g}, {SCORE_MAX:g}]"
                )

    def score(self, trait: str) -> float:
        if trait not in TRAITS:
            raise KeyError(f"unknown trait {trait!r}")
        return getattr(self, trait)


@dataclass(frozen=True, slots=True)
class IntervalSpec:
    index: int
    start: datetime
    end: datetime

    def __post_init__(self) -> None:
        if not self.start < self.end:
            raise ValueError("interval start must precede end")

    def contains(self, instant: datetime) -> bool:
        return self.start <= instant < self.end


@dataclass(frozen=True)
class EgoIntervalNetwork:
    ego_id: str
    interval_index: int
    call_counts: Mapping[str, int]

    def __post_init__(self) -> None:
        if any(c < 1 for c in self.call_counts.values()):
            raise ValueError("call counts must be positive")

    @property
    def size(self) -> int:
        return len(self.call_counts)

    @property
    def total_calls(self) -> int:
        return sum(self.call_counts.values())

    @property
    def alters(self) -> frozenset[str]:
        return frozenset(self.call_counts)


@dataclass(frozen=True, slots=True)
class RowError:
    line: int
    reason: str


@dataclass
class CallParseReport:
    records: list[CallRecord] = field(default_factory=list)
    errors: list[RowError] = field(default_factory=list)
    out_of_window: int = 0

    @property
    def rows_read(self) -> int:
        return len(self.records) + len(self.errors) + self.out_of_window


@dataclass
class TraitParseReport:
    profiles: dict[str, TraitProfile] = field(default_factory=dict)
    errors: list[RowError] = field(default_factory=list)


def as_utc(value: date | datetime) -> datetime:
    """Coerce a date or datetime to an aware UTC datetime (naive means UTC)."""
    if not isinstance(value, datetime):
        value = datetime(value.year, value.month, value.day)
    if value.tzinfo is None:
        return value.replace(tzinfo=timezone.utc)
    return value.astimezone(timezone.utc)


def parse_instant(text: str) -> datetime:
    """Parse an ISO-8601 instant; a trailing ``Z`` and naive values mean UTC."""
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    return as_utc(datetime.fromisoformat(text))


def _read_bytes(source: Source) -> bytes:
    try:
        if isinstance(source, (bytes, bytearray)):
            data = bytes(source)
        elif isinstance(source, (str, os.PathLike)):
            data = Path(source).read_bytes()
        else:
            data = source.read()
    except OSError as exc:
        raise IngestError(f"cannot read input: {exc}") from exc
    if data[:2] == b"\x1f\x8b":
        try:
            data = gzip.decompress(data)
        except (OSError, EOFError) as exc:
            raise IngestError(f"corrupt gzip stream: {exc}") from exc
    return data


def _csv_rows(source: Source) -> tuple[list[str], Iterable[tuple[int, list[str]]]]:
    data = _read_bytes(source)
    try:
        text = data.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise IngestError(f"input is not UTF-8 text: {exc}") from exc
    reader = csv.reader(io.StringIO(text, newline=""))
    header = next(reader, None)
    if header is None or not any(h.strip() for h in header):
        raise IngestError("input is empty (no header row)")
    header = [h.strip() for h in header]

    def rows():
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            yield reader.line_num, row

    return header, rows()


def _column_index(header: list[str], required: Iterable[str], optional=()) -> dict[str, int]:
    missing = [c for c in required if c not in header]
    if missing:
        raise IngestError(
            f"header {','.join(header)!r} lacks required column(s): {', '.join(missing)}"
        )
    return {c: header.index(c) for c in (*required, *optional) if c in header}


def parse_call_records(
    source: Source,
    window: tuple[datetime, datetime] | None = None,
    max_malformed: float = MAX_MALFORMED_FRACTION,
) -> CallParseReport:
    """Parse a call-record CSV (plain or gzip).

    Timestamps are either ISO-8601 or integer epoch seconds; the first
    non-empty timestamp decides which for the whole file. Malformed rows
    are collected with their line number. Rows outside ``window`` (half-open)
    are counted in ``out_of_window`` and skipped. If more than
    ``max_malformed`` of the data rows are malformed the file is rejected.
    """
    header, rows = _csv_rows(source)
    cols = _column_index(header, CALL_COLUMNS[:4], optional=("duration_s",))
    report = CallParseReport()
    epoch_mode: bool | None = None
    if window is not None:
        window = (as_utc(window[0]), as_utc(window[1]))

    for line, row in rows:
        try:
            if len(row) != len(header):
                raise ValueError(f"expected {len(header)} fields, got {len(row)}")
            ts_text = row[cols["timestamp"]].strip()
            if epoch_mode is None and ts_text:
                epoch_mode = bool(_EPOCH_RE.match(ts_text))
            if epoch_mode:
                if not _EPOCH_RE.match(ts_text):
                    raise ValueError(f"bad epoch timestamp {ts_text!r}")
                ts = datetime.fromtimestamp(int(ts_text), tz=timezone.utc)
            else:
                if not ts_text or _EPOCH_RE.match(ts_text):
                    raise ValueError(f"bad ISO timestamp {ts_text!r}")
                ts = parse_instant(ts_text)
            duration = None
            if "duration_s" in cols:
                d_text = row[cols["duration_s"]].strip()
                if d_text:
                    duration = int(d_text)
            record = CallRecord(
                ego_id=row[cols["ego_id"]].strip(),
                alter_id=row[cols["alter_id"]].strip(),
                timestamp=ts,
                direction=row[cols["direction"]].strip().lower(),
                duration_s=duration,
            )
        except (ValueError, OverflowError, OSError) as exc:
            report.errors.append(RowError(line, str(exc)))
            continue
        if window is not None and not (window[0] <= record.timestamp < window[1]):
            report.out_of_window += 1
            continue
        report.records.append(record)

    n = report.rows_read
    if n and len(report.errors) / n > max_malformed:
        first = report.errors[0]
        raise IngestError(
            f"{len(report.errors)} of {n} rows malformed (> {max_malformed:.0%}); "
            f"wrong file? first error at line {first.line}: {first.reason}"
        )
    return report


def parse_trait_profiles(source: Source) -> TraitParseReport:
    """Parse Big-Five scores; duplicate ego ids are fatal, bad rows are reported."""
    header, rows = _csv_rows(source)
    cols = _column_index(header, TRAIT_COLUMNS)
    report = TraitParseReport()
    for line, row in rows:
        try:
            if len(row) != len(header):
                raise ValueError(f"expected {len(header)} fields, got {len(row)}")
            ego = row[cols["ego_id"]].strip()
            if not ego:
                raise ValueError("empty ego id")
            scores = {t: float(row[cols[t]]) for t in TRAITS}
            profile = TraitProfile(ego_id=ego, **scores)
        except ValueError as exc:
            report.errors.append(RowError(line, str(exc)))
            continue
        if ego in report.profiles:
            raise IngestError(f"duplicate trait profile for ego {ego!r} at line {line}")
        report.profiles[ego] = profile
    return report


def add_months(instant: datetime, months: int) -> datetime:
    month0 = instant.month - 1 + months
    year = instant.year + month0 // 12
    month = month0 % 12 + 1
    day = min(instant.day, calendar.monthrange(year, month)[1])
    return instant.replace(year=year, month=month, day=day)


def partition_intervals(
    study_start: date | datetime,
    n_intervals: int = 3,
    interval_length: timedelta = DEFAULT_INTERVAL_LENGTH,
    *,
    months: int | None = None,
) -> list[IntervalSpec]:
    """Split the timeline into ``n_intervals`` contiguous half-open windows.

    Fixed-length windows by default; pass ``months`` for calendar-month windows.
    """
    if n_intervals < 2:
        raise ValueError("need at least 2 intervals to compare consecutive pairs")
    start = as_utc(study_start)
    if months is not None:
        if months < 1:
            raise ValueError("months must be positive")
        bounds = [add_months(start, k * months) for k in range(n_intervals + 1)]
    else:
        if interval_length <= timedelta(0):
            raise ValueError("interval length must be positive")
        bounds = [start + k * interval_length for k in range(n_intervals + 1)]
    return [IntervalSpec(k + 1, bounds[k], bounds[k + 1]) for k in range(n_intervals)]


def build_networks(
    records: Iterable[CallRecord], intervals: list[IntervalSpec]
) -> dict[tuple[str, int], EgoIntervalNetwork]:
    """Count outgoing calls per (ego, interval, alter).

    Calls outside every interval are ignored; empty networks are not emitted.
    Keys are returned in sorted order.
    """
    starts = [iv.start for iv in intervals]
    counts: dict[tuple[str, int], Counter] = defaultdict(Counter)
    for rec in records:
        if rec.direction != OUTGOING:
            continue
        pos = bisect_right(starts, rec.timestamp) - 1
        if pos < 0 or not intervals[pos].contains(rec.timestamp):
            continue
        counts[(rec.ego_id, intervals[pos].index)][rec.alter_id] += 1
    return {
        key: EgoIntervalNetwork(key[0], key[1], dict(sorted(counts[key].items())))
        for key in sorted(counts)
    }


def retain_active_egos(
    networks: Mapping[tuple[str, int], EgoIntervalNetwork],
    min_calls: int = 150,
    min_alters: int = 20,
    interval_indices: Iterable[int] | None = None,
) -> set[str]:
    """Egos meeting both thresholds in every interval.

    ``interval_indices`` defaults to every interval index seen in ``networks``;
    an ego missing a network in any of them is dropped.
    """
    if interval_indices is None:
        interval_indices = {k[1] for k in networks}
    wanted = sorted(set(interval_indices))
    egos = {k[0] for k in networks}
    kept = set()
    for ego in egos:
        for idx in wanted:
            net = networks.get((ego, idx))
            if net is None or net.total_calls < min_calls or net.size < min_alters:
                break
        else:
            kept.add(ego)
    return kept


def write_snapshot(
    networks: Mapping[tuple[str, int], EgoIntervalNetwork], path: str | os.PathLike
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SNAPSHOT_COLUMNS)
        for key in sorted(networks):
            net = networks[key]
            for alter in sorted(net.call_counts):
                writer.writerow([net.ego_id, net.interval_index, alter, net.call_counts[alter]])


def read_snapshot(source: Source) -> dict[tuple[str, int], EgoIntervalNetwork]:
    header, rows = _csv_rows(source)
    cols = _column_index(header, SNAPSHOT_COLUMNS)
    counts: dict[tuple[str, int], dict[str, int]] = defaultdict(dict)
    for line, row in rows:
        try:
            key = (row[cols["ego_id"]], int(row[cols["interval_index"]]))
            n = int(row[cols["call_count"]])
            if n < 1:
                raise ValueError("non-positive call count")
        except (ValueError, IndexError) as exc:
            raise IngestError(f"snapshot line {line}: {exc}") from exc
        alter = row[cols["alter_id"]]
        if alter in counts[key]:
            raise IngestError(f"snapshot line {line}: duplicate alter {alter!r}")
        counts[key][alter] = n
    return {
        key: EgoIntervalNetwork(key[0], key[1], dict(sorted(counts[key].items())))
        for key in sorted(counts)
    }
