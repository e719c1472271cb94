"""Event log data model plus CSV parsing, splitting and serialization.

An event log is a collection of traces (cases); each trace is a sequence of
events carrying an activity label, start/end timestamps and an optional
resource.  Timestamps are stored as integer epoch seconds (UTC); sub-second
input is truncated so that serialization round-trips bit for bit.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import IO, Iterable, Mapping, Optional

__all__ = [
    "Event",
    "Trace",
    "EventLog",
    "LogFormatError",
    "DEFAULT_COLUMNS",
    "parse_log",
    "temporal_split",
    "write_log",
    "parse_timestamp",
    "format_timestamp",
    "missing_resource_label",
]

# Column roles -> default CSV header names.
DEFAULT_COLUMNS = {
    "case": "case_id",
    "activity": "activity",
    "start": "start_time",
    "end": "end_time",
    "resource": "resource",
}

OUTPUT_HEADER = ["case_id", "activity", "start_time", "end_time", "resource"]


class LogFormatError(ValueError):
    """Raised when a CSV source violates the event-log format."""


def missing_resource_label(activity: str) -> str:
    """Stand-in performer label for events recorded without a resource."""
    return f"missing::{activity}"


def parse_timestamp(text: str) -> int:
    """Parse an ISO-8601 timestamp into epoch seconds (UTC, truncated)."""
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(raw)
    except ValueError as exc:
        raise LogFormatError(f"unparseable timestamp {text!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return math.floor(dt.timestamp())


def format_timestamp(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).isoformat()


@dataclass(frozen=True)
class Event:
    case_id: str
    activity: str
    ts_start: int
    ts_end: int
    resource: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.activity:
            raise LogFormatError(f"event in case {self.case_id!r} has an empty activity")
        if self.ts_end < self.ts_start:
            raise LogFormatError(
                f"event {self.activity!r} in case {self.case_id!r} ends before it starts"
            )

    @property
    def duration(self) -> int:
        return self.ts_end - self.ts_start

    @property
    def performer(self) -> str:
        """Resource label, or the missing-resource stand-in label."""
        return self.resource if self.resource is not None else missing_resource_label(self.activity)


@dataclass(frozen=True)
class Trace:
    """Events of one case, in (ts_start, ts_end, activity) order."""

    case_id: str
    events: tuple[Event, ...]

    @property
    def first_start(self) -> int:
        return self.events[0].ts_start

    @property
    def last_end(self) -> int:
        return max(e.ts_end for e in self.events)

    @property
    def activities(self) -> tuple[str, ...]:
        return tuple(e.activity for e in self.events)

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class EventLog:
    """A multiset of traces; traces are stored sorted by case id."""

    traces: tuple[Trace, ...]
    activity_set: frozenset[str]
    resource_set: frozenset[str]

    @classmethod
    def from_events(cls, events: Iterable[Event]) -> "EventLog":
        by_case: dict[str, list[Event]] = {}
        for event in events:
            by_case.setdefault(event.case_id, []).append(event)
        traces = []
        for case_id in sorted(by_case):
            ordered = sorted(by_case[case_id], key=lambda e: (e.ts_start, e.ts_end, e.activity))
            traces.append(Trace(case_id, tuple(ordered)))
        return cls.from_traces(traces)

    @classmethod
    def from_traces(cls, traces: Iterable[Trace]) -> "EventLog":
        ordered = tuple(sorted(traces, key=lambda t: t.case_id))
        activities = frozenset(e.activity for t in ordered for e in t.events)
        resources = frozenset(
            e.resource for t in ordered for e in t.events if e.resource is not None
        )
        return cls(ordered, activities, resources)

    @property
    def n_cases(self) -> int:
        return len(self.traces)

    @property
    def n_events(self) -> int:
        return sum(len(t) for t in self.traces)

    def events(self) -> Iterable[Event]:
        for trace in self.traces:
            yield from trace.events


def _open_text(source) -> tuple[IO[str], bool]:
    """Returns (stream, owned); binary streams are wrapped, paths opened."""
    if isinstance(source, io.TextIOBase):
        return source, False
    if hasattr(source, "read"):
        return io.TextIOWrapper(source, encoding="utf-8", newline=""), False
    return open(source, "r", newline=""), True


def parse_log(source, column_map: Optional[Mapping[str, str]] = None) -> EventLog:
    """Read a CSV event log.

    `source` is a path or a (text or binary) file object.  `column_map` maps
    the roles case/activity/start/end/resource to header names; unspecified
    roles use the defaults in DEFAULT_COLUMNS.  Rows with an empty resource
    cell are kept with resource=None.
    """
    columns = dict(DEFAULT_COLUMNS)
    if column_map:
        unknown = set(column_map) - set(columns)
        if unknown:
            raise LogFormatError(f"unknown column roles: {sorted(unknown)}")
        columns.update(column_map)

    stream, owned = _open_text(source)
    try:
        reader = csv.reader(stream)
        try:
            header = next(reader)
        except StopIteration:
            raise LogFormatError("empty input: no header row") from None

        index: dict[str, int] = {}
        for role, name in columns.items():
            try:
                index[role] = header.index(name)
            except ValueError:
                raise LogFormatError(f"missing column {name!r} (role: {role})") from None

        events: list[Event] = []
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not cell for cell in row):
                continue
            try:
                case_id = row[index["case"]]
                activity = row[index["activity"]]
                start_text = row[index["start"]]
                end_text = row[index["end"]]
                resource = row[index["resource"]]
            except IndexError:
                raise LogFormatError(f"row {row_no}: too few fields") from None
            if not case_id:
                raise LogFormatError(f"row {row_no}: empty case id")
            try:
                ts_start = parse_timestamp(start_text)
                ts_end = parse_timestamp(end_text)
                event = Event(
                    case_id=case_id,
                    activity=activity,
                    ts_start=ts_start,
                    ts_end=ts_end,
                    resource=resource if resource else None,
                )
            except LogFormatError as exc:
                raise LogFormatError(f"row {row_no}: {exc}") from None
            events.append(event)
    finally:
        if owned:
            stream.close()

    return EventLog.from_events(events)


def write_log(log: EventLog, sink) -> None:
    """Write a CSV event log; rows grouped by case in event order.

    Inverse of parse_log up to second precision: parse_log(write_log(L)) == L.
    """
    own = isinstance(sink, (str, bytes)) or not hasattr(sink, "write")
    stream = open(sink, "w", newline="") if own else sink
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(OUTPUT_HEADER)
        for trace in log.traces:
            for event in trace.events:
                writer.writerow(
                    [
                        event.case_id,
                        event.activity,
                        format_timestamp(event.ts_start),
                        format_timestamp(event.ts_end),
                        event.resource if event.resource is not None else "",
                    ]
                )
    finally:
        if own:
            stream.close()


def temporal_split(log: EventLog, train_fraction: float) -> tuple[EventLog, EventLog]:
    """Split a log into train/test halves at a separation instant.

    Cases are ordered by first start (ties by case id); the separation time is
    the first start of the case at index ceil(train_fraction * n).  Cases that
    end before the separation go to train, cases starting at or after it go to
    test, and cases spanning the instant are dropped.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    n = log.n_cases
    if n < 2:
        raise ValueError("temporal split needs at least 2 cases")

    ordered = sorted(log.traces, key=lambda t: (t.first_start, t.case_id))
    sep_index = min(math.ceil(train_fraction * n), n - 1)
    separation = ordered[sep_index].first_start

    train = [t for t in ordered if t.last_end < separation]
    test = [t for t in ordered if t.first_start >= separation]
    return EventLog.from_traces(train), EventLog.from_traces(test)
