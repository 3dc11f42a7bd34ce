"""Trace and tower-registry data model.

Raw inputs are two CSV files: a trace of communication events
(``user_id,timestamp,tower_id,event_type``) and a tower registry
(``tower_id,lat,lon``). Parsing is tolerant: malformed rows are counted
and skipped, never fatal. All timestamps are normalized to one caller-chosen
timezone, because every downstream feature is built on the local civil
hour-of-week.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import datetime, timezone as _utc_tz
from typing import IO, Iterable, Sequence
from zoneinfo import ZoneInfo

from .errors import EmptyCorpusError, InputError

EVENT_TYPES = frozenset({"call", "sms", "data"})

TRACE_HEADER = ["user_id", "timestamp", "tower_id", "event_type"]
TOWER_HEADER = ["tower_id", "lat", "lon"]

#: drop reasons tallied by the trace parser
REASON_MALFORMED = "malformed_line"
REASON_BAD_TIMESTAMP = "bad_timestamp"
REASON_UNKNOWN_TOWER = "unknown_tower"


@dataclass(frozen=True, slots=True)
class GeoPoint:
    """WGS84 coordinate in decimal degrees."""

    lat_deg: float
    lon_deg: float

    def __post_init__(self) -> None:
        if not (-90.0 <= self.lat_deg <= 90.0):
            raise ValueError(f"latitude out of range: {self.lat_deg}")
        if not (-180.0 <= self.lon_deg <= 180.0):
            raise ValueError(f"longitude out of range: {self.lon_deg}")


@dataclass(frozen=True, slots=True)
class TraceRecord:
    """One communication event.

    ``timestamp`` is always timezone-aware and already converted to the
    corpus timezone by the parser.
    """

    user_id: str
    timestamp: datetime
    tower_id: str
    event_type: str


@dataclass(slots=True)
class TowerRegistry:
    """tower_id -> coordinates, with parse-time warning tallies."""

    entries: dict[str, GeoPoint] = field(default_factory=dict)
    duplicate_ids: int = 0
    dropped_bad_coordinate: int = 0

    def __contains__(self, tower_id: str) -> bool:
        return tower_id in self.entries

    def __getitem__(self, tower_id: str) -> GeoPoint:
        return self.entries[tower_id]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(slots=True)
class ValidationReport:
    """Parse outcome tallies. total_records = kept + sum(dropped)."""

    total_records: int = 0
    dropped: dict[str, int] = field(default_factory=dict)
    distinct_users: int = 0
    span_start: datetime | None = None
    span_end: datetime | None = None

    @property
    def dropped_total(self) -> int:
        return sum(self.dropped.values())

    @property
    def kept(self) -> int:
        return self.total_records - self.dropped_total

    def to_json_dict(self) -> dict:
        return {
            "total_records": self.total_records,
            "dropped": self.dropped_total,
            "reasons": dict(sorted(self.dropped.items())),
            "distinct_users": self.distinct_users,
            "span_start": self.span_start.isoformat() if self.span_start else None,
            "span_end": self.span_end.isoformat() if self.span_end else None,
        }


def week_hour_index(timestamp: datetime, tz: str | ZoneInfo) -> int:
    """Map an instant to its hour-of-week slot: 0-23 weekday, 24-47 weekend.

    Weekday/weekend follows the local civil calendar (Mon-Fri vs Sat-Sun)
    in ``tz``; all weekdays share one block of 24 slots, both weekend days
    the other.
    """
    zone = ZoneInfo(tz) if isinstance(tz, str) else tz
    local = timestamp.astimezone(zone)
    base = 24 if local.weekday() >= 5 else 0
    return base + local.hour


def _open_text(source) -> IO[str]:
    if isinstance(source, (str, bytes)) and not isinstance(source, bytes):
        try:
            return open(source, "r", encoding="utf-8", newline="")
        except OSError as exc:
            raise InputError(f"cannot read {source}: {exc}") from exc
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"))
    if hasattr(source, "read"):
        data = source.read()
        if isinstance(data, bytes):
            data = data.decode("utf-8")
        return io.StringIO(data)
    raise InputError(f"unsupported source type: {type(source)!r}")


def _parse_timestamp(raw: str, zone: ZoneInfo) -> datetime:
    """ISO-8601 or integer epoch seconds -> aware datetime in ``zone``.

    Epoch values are UTC by definition. Naive ISO strings are taken as
    local time in ``zone``; an explicit offset is honored as written.
    """
    raw = raw.strip()
    if not raw:
        raise ValueError("empty timestamp")
    body = raw[1:] if raw[:1] in "+-" else raw
    if body.isdigit():
        return datetime.fromtimestamp(int(raw), tz=_utc_tz.utc).astimezone(zone)
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    ts = datetime.fromisoformat(raw)
    if ts.tzinfo is None:
        return ts.replace(tzinfo=zone)
    return ts.astimezone(zone)


def parse_trace(
    source,
    timezone: str,
    registry: TowerRegistry | None = None,
) -> tuple[list[TraceRecord], ValidationReport]:
    """Parse a trace CSV into records, dropping and tallying bad rows.

    When ``registry`` is given, rows referencing unknown towers are dropped
    (reason ``unknown_tower``). Raises :class:`EmptyCorpusError` when no
    valid record survives.
    """
    try:
        zone = ZoneInfo(timezone)
    except Exception as exc:
        raise InputError(f"unknown timezone {timezone!r}") from exc

    report = ValidationReport()
    records: list[TraceRecord] = []
    users: set[str] = set()

    with _open_text(source) as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyCorpusError("trace source is empty") from None
        if [h.strip() for h in header] != TRACE_HEADER:
            raise InputError(
                f"bad trace header {header!r}, expected {TRACE_HEADER}"
            )
        for row in reader:
            if not row:
                continue
            report.total_records += 1
            if len(row) != 4 or not row[0].strip() or not row[2].strip():
                report.dropped[REASON_MALFORMED] = (
                    report.dropped.get(REASON_MALFORMED, 0) + 1
                )
                continue
            user_id, raw_ts, tower_id, event_type = (c.strip() for c in row)
            if event_type not in EVENT_TYPES:
                report.dropped[REASON_MALFORMED] = (
                    report.dropped.get(REASON_MALFORMED, 0) + 1
                )
                continue
            try:
                ts = _parse_timestamp(raw_ts, zone)
            except (ValueError, OverflowError, OSError):
                report.dropped[REASON_BAD_TIMESTAMP] = (
                    report.dropped.get(REASON_BAD_TIMESTAMP, 0) + 1
                )
                continue
            if registry is not None and tower_id not in registry:
                report.dropped[REASON_UNKNOWN_TOWER] = (
                    report.dropped.get(REASON_UNKNOWN_TOWER, 0) + 1
                )
                continue
            records.append(TraceRecord(user_id, ts, tower_id, event_type))
            users.add(user_id)
            if report.span_start is None or ts < report.span_start:
                report.span_start = ts
            if report.span_end is None or ts > report.span_end:
                report.span_end = ts

    report.distinct_users = len(users)
    if not records:
        raise EmptyCorpusError(
            f"no valid trace records ({report.total_records} rows, "
            f"all dropped: {dict(report.dropped)})"
        )
    return records, report


def parse_tower_registry(source) -> TowerRegistry:
    """Parse the tower CSV. Duplicate ids are last-wins (counted); rows with
    out-of-range coordinates are dropped (counted). An empty registry is fatal.
    """
    registry = TowerRegistry()
    with _open_text(source) as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError("tower source is empty") from None
        if [h.strip() for h in header] != TOWER_HEADER:
            raise InputError(
                f"bad tower header {header!r}, expected {TOWER_HEADER}"
            )
        for row in reader:
            if not row:
                continue
            if len(row) != 3 or not row[0].strip():
                registry.dropped_bad_coordinate += 1
                continue
            tower_id = row[0].strip()
            try:
                point = GeoPoint(float(row[1]), float(row[2]))
            except ValueError:
                registry.dropped_bad_coordinate += 1
                continue
            if tower_id in registry.entries:
                registry.duplicate_ids += 1
            registry.entries[tower_id] = point
    if not registry.entries:
        raise InputError("tower registry has no valid entries")
    return registry


def records_to_rows(records: Iterable[TraceRecord]) -> list[list[str]]:
    """Canonical CSV row form; round-trips through :func:`parse_trace`."""
    return [
        [r.user_id, r.timestamp.isoformat(), r.tower_id, r.event_type]
        for r in records
    ]


def write_trace_csv(records: Sequence[TraceRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        writer.writerows(records_to_rows(records))


def write_tower_csv(registry: TowerRegistry, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TOWER_HEADER)
        for tower_id in sorted(registry.entries):
            p = registry.entries[tower_id]
            writer.writerow([tower_id, f"{p.lat_deg:.9f}", f"{p.lon_deg:.9f}"])
