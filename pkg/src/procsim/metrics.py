"""Distances between a reference log and a simulated log.

Five measures cover three views of a process: control flow (n-gram distance),
time (absolute / circadian / relative event distributions) and congestion
(cycle time distribution).  Time-based measures collect both the start and
the end instant of every event, express them in hours, and compare the two
samples with the 1-Wasserstein distance.  All measures are symmetric and are
exactly zero when a log is compared with itself.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable

from .distributions import wasserstein_1d
from .event_log import EventLog, Trace

__all__ = [
    "MetricsReport",
    "InteractionMatrix",
    "ngd",
    "event_distribution_distance",
    "ctd",
    "interaction_matrix",
    "compute_report",
]

SECONDS_PER_HOUR = 3600.0

# padding tokens for n-grams; NUL-prefixed so they cannot collide with
# real activity labels from a CSV log
_TRACE_START = "\x00start"
_TRACE_END = "\x00end"

# penalty (hours) when a weekday occurs in only one of the logs
_MISSING_WEEKDAY_PENALTY = 24.0


@dataclass(frozen=True)
class MetricsReport:
    """ngd is dimensionless in [0, 1]; the other four are in hours."""

    ngd: float
    aed: float
    ced: float
    red: float
    ctd: float

    FIELDS = ("ngd", "aed", "ced", "red", "ctd")

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.ngd, self.aed, self.ced, self.red, self.ctd)

    @classmethod
    def mean(cls, reports: Iterable["MetricsReport"]) -> "MetricsReport":
        rows = [r.as_tuple() for r in reports]
        if not rows:
            raise ValueError("cannot average zero reports")
        n = len(rows)
        return cls(*(sum(col) / n for col in zip(*rows)))


def _require_non_empty(real: EventLog, sim: EventLog) -> None:
    if real.n_cases == 0 or sim.n_cases == 0:
        raise ValueError("metrics require two non-empty logs")


def _ngram_counts(log: EventLog, n: int) -> Counter:
    counts: Counter = Counter()
    pad = (_TRACE_START,) * (n - 1)
    for trace in log.traces:
        seq = pad + trace.activities + (_TRACE_END,)
        for k in range(len(seq) - n + 1):
            counts[seq[k : k + n]] += 1
    return counts


def ngd(real: EventLog, sim: EventLog, n: int = 2) -> float:
    """Normalized L1 difference of n-gram frequencies, in [0, 1].

    Traces are padded with n-1 start markers and one end marker, so single
    activities and case boundaries count as well.
    """
    if n < 2:
        raise ValueError("n-gram size must be at least 2")
    _require_non_empty(real, sim)
    counts_real = _ngram_counts(real, n)
    counts_sim = _ngram_counts(sim, n)
    diff = sum(
        abs(counts_real.get(g, 0) - counts_sim.get(g, 0))
        for g in counts_real.keys() | counts_sim.keys()
    )
    total = sum(counts_real.values()) + sum(counts_sim.values())
    return diff / total


def _instants(trace: Trace) -> Iterable[int]:
    for event in trace.events:
        yield event.ts_start
        yield event.ts_end


def event_distribution_distance(real: EventLog, sim: EventLog, kind: str) -> float:
    """Wasserstein distance between event-instant distributions, in hours.

    kind="absolute": instants relative to the earlier log's first instant.
    kind="relative": instants relative to their own case's first instant.
    kind="circadian": hour-of-day per weekday, averaged over weekdays; a
    weekday present in only one log contributes a 24-hour penalty.
    """
    _require_non_empty(real, sim)
    if kind == "absolute":
        origin = min(
            min(t.first_start for t in real.traces),
            min(t.first_start for t in sim.traces),
        )
        hours_real = [(ts - origin) / SECONDS_PER_HOUR for t in real.traces for ts in _instants(t)]
        hours_sim = [(ts - origin) / SECONDS_PER_HOUR for t in sim.traces for ts in _instants(t)]
        return wasserstein_1d(hours_real, hours_sim)

    if kind == "relative":
        hours_real = [
            (ts - t.first_start) / SECONDS_PER_HOUR for t in real.traces for ts in _instants(t)
        ]
        hours_sim = [
            (ts - t.first_start) / SECONDS_PER_HOUR for t in sim.traces for ts in _instants(t)
        ]
        return wasserstein_1d(hours_real, hours_sim)

    if kind == "circadian":
        by_day_real = _hours_by_weekday(real)
        by_day_sim = _hours_by_weekday(sim)
        days = sorted(by_day_real.keys() | by_day_sim.keys())
        if not days:
            return 0.0
        acc = 0.0
        for day in days:
            if day in by_day_real and day in by_day_sim:
                acc += wasserstein_1d(by_day_real[day], by_day_sim[day])
            else:
                acc += _MISSING_WEEKDAY_PENALTY
        return acc / len(days)

    raise ValueError(f"unknown distribution kind {kind!r}")


def _hours_by_weekday(log: EventLog) -> dict[int, list[float]]:
    grouped: dict[int, list[float]] = {}
    for trace in log.traces:
        for ts in _instants(trace):
            weekday = (ts // 86400 + 3) % 7  # 0 = Monday
            grouped.setdefault(weekday, []).append((ts % 86400) / SECONDS_PER_HOUR)
    return grouped


def ctd(real: EventLog, sim: EventLog) -> float:
    """Wasserstein distance between the cycle-time samples, in hours."""
    _require_non_empty(real, sim)
    cycle_real = [(t.last_end - t.first_start) / SECONDS_PER_HOUR for t in real.traces]
    cycle_sim = [(t.last_end - t.first_start) / SECONDS_PER_HOUR for t in sim.traces]
    return wasserstein_1d(cycle_real, cycle_sim)


@dataclass(frozen=True)
class InteractionMatrix:
    """Handover counts between performers; labels sorted lexicographically."""

    labels: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]

    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    def get(self, from_label: str, to_label: str) -> int:
        i = self.labels.index(from_label)
        j = self.labels.index(to_label)
        return self.counts[i][j]


def interaction_matrix(log: EventLog) -> InteractionMatrix:
    """Count consecutive same-case event pairs by (from, to) performer.

    Events without a resource count under their stand-in performer label.
    """
    if log.n_cases == 0:
        raise ValueError("interaction matrix requires a non-empty log")
    labels = sorted({e.performer for t in log.traces for e in t.events})
    pos = {label: i for i, label in enumerate(labels)}
    counts = [[0] * len(labels) for _ in labels]
    for trace in log.traces:
        performers = [e.performer for e in trace.events]
        for a, b in zip(performers, performers[1:]):
            counts[pos[a]][pos[b]] += 1
    return InteractionMatrix(tuple(labels), tuple(tuple(row) for row in counts))


def compute_report(real: EventLog, sim: EventLog, n: int = 2) -> MetricsReport:
    """All five distances between a reference log and a simulated log."""
    return MetricsReport(
        ngd=ngd(real, sim, n),
        aed=event_distribution_distance(real, sim, "absolute"),
        ced=event_distribution_distance(real, sim, "circadian"),
        red=event_distribution_distance(real, sim, "relative"),
        ctd=ctd(real, sim),
    )
