"""Mine a multi-agent process model from an event log.

One agent is instantiated per resource, plus a stand-in agent for every
activity that occurs without resource information.  Each agent gets a weekly
working grid, a set of activities it can perform with per-activity duration
distributions, and a type id grouping agents with similar activity profiles.
Shared behavior models: next-activity transition tables (a log-global one and
a per-agent one), an agent-to-agent handover matrix, a case inter-arrival
distribution and optional per-activity extraneous-delay distributions.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

from .distributions import FittedDistribution, fit_distribution
from .event_log import Event, EventLog, missing_resource_label

__all__ = [
    "Schedule",
    "Capabilities",
    "Agent",
    "TransitionModel",
    "HandoverMatrix",
    "Mas",
    "DiscoveryOptions",
    "CASE_END",
    "discover_agents",
    "discover_agent_types",
    "discover_schedule",
    "discover_capabilities",
    "discover_transition_model",
    "discover_handover_matrix",
    "discover_interarrival",
    "discover_extraneous_delays",
    "discover_mas",
]

logger = logging.getLogger(__name__)

WEEK_SECONDS = 7 * 86400

# Placeholder "next activity" marking the end of a case in transition tables.
CASE_END = None


def week_offset(ts: int) -> int:
    """Seconds since Monday 00:00 UTC of the week containing ts."""
    day = (ts // 86400 + 3) % 7  # epoch day 0 was a Thursday
    return day * 86400 + ts % 86400


def week_index(ts: int) -> int:
    """Monday-anchored week number of ts (for counting active weeks)."""
    return (ts // 86400 + 3) // 7


@dataclass(frozen=True)
class Schedule:
    """Weekly working grid: 7 days split into slots of `granularity` minutes."""

    granularity: int = 60
    working: frozenset[int] = frozenset()
    always_available: bool = False

    def __post_init__(self) -> None:
        if 1440 % self.granularity != 0:
            raise ValueError("granularity must divide 1440 minutes")

    @classmethod
    def always(cls, granularity: int = 60) -> "Schedule":
        n = 7 * (1440 // granularity)
        return cls(granularity, frozenset(range(n)), always_available=True)

    @property
    def slot_seconds(self) -> int:
        return self.granularity * 60

    @property
    def n_slots(self) -> int:
        return 7 * (1440 // self.granularity)

    def slot_of(self, ts: int) -> int:
        return week_offset(ts) // self.slot_seconds

    def is_working(self, ts: int) -> bool:
        return self.always_available or self.slot_of(ts) in self.working

    def merged_intervals(self) -> tuple[tuple[int, int], ...]:
        """Maximal working intervals as (start, end) seconds within one week."""
        if self.always_available:
            return ((0, WEEK_SECONDS),)
        step = self.slot_seconds
        intervals: list[list[int]] = []
        for slot in sorted(self.working):
            start = slot * step
            if intervals and intervals[-1][1] == start:
                intervals[-1][1] = start + step
            else:
                intervals.append([start, start + step])
        return tuple((s, e) for s, e in intervals)


def working_intervals_between(
    merged: Sequence[tuple[int, int]], start: int, end: int
) -> list[tuple[int, int]]:
    """Intersect a weekly working pattern with the absolute window [start, end)."""
    if start >= end:
        return []
    result: list[tuple[int, int]] = []
    base = start - week_offset(start)
    while base < end:
        for s, e in merged:
            lo = max(base + s, start)
            hi = min(base + e, end)
            if lo < hi:
                if result and result[-1][1] == lo:
                    result[-1] = (result[-1][0], hi)
                else:
                    result.append((lo, hi))
        base += WEEK_SECONDS
    return result


@dataclass(frozen=True)
class Capabilities:
    """Activities an agent can execute plus a duration PDF per activity."""

    alloc: frozenset[str] = frozenset()
    durations: Mapping[str, FittedDistribution] = field(default_factory=dict)


@dataclass(frozen=True)
class Agent:
    id: int
    name: str
    agent_type: int = -1
    schedule: Schedule = field(default_factory=Schedule.always)
    capabilities: Capabilities = field(default_factory=Capabilities)
    is_dummy: bool = False


@dataclass(frozen=True)
class TransitionModel:
    """Frequentist next-activity probabilities conditioned on activity prefixes.

    Keys are (prefix, group) pairs; group is None in global mode and an agent
    (or agent-type) id in local mode, identifying who performed the last event
    of the prefix.  Values map each next activity -- or CASE_END -- to its
    probability.  Lookups back off by repeatedly dropping the oldest activity
    of the prefix until a stored key matches.
    """

    mode: str  # "global" | "local"
    table: Mapping[tuple[tuple[str, ...], Optional[int]], Mapping[Optional[str], float]]
    max_prefix_len: Optional[int] = None
    agent_groups: Mapping[int, int] = field(default_factory=dict)

    def group_of(self, agent_id: int) -> int:
        return self.agent_groups.get(agent_id, agent_id)

    def lookup(
        self, prefix: Sequence[str], agent_id: Optional[int] = None
    ) -> Optional[Mapping[Optional[str], float]]:
        """Longest-suffix match; None when no suffix of the prefix is known."""
        seq = tuple(prefix)
        if self.mode == "global":
            for start in range(len(seq) + 1):
                probs = self.table.get((seq[start:], None))
                if probs is not None:
                    return probs
            return None
        if agent_id is None:
            raise ValueError("local transition lookup requires an agent id")
        group = self.group_of(agent_id)
        for start in range(len(seq)):
            probs = self.table.get((seq[start:], group))
            if probs is not None:
                return probs
        return None


@dataclass(frozen=True)
class HandoverMatrix:
    """probs[j][i] = probability that agent i performs the event after agent j."""

    probs: tuple[tuple[float, ...], ...]

    def row(self, agent_id: int) -> tuple[float, ...]:
        return self.probs[agent_id]

    @property
    def size(self) -> int:
        return len(self.probs)


@dataclass(frozen=True)
class Mas:
    """The discovered simulation model: agents plus shared behavior models."""

    agents: tuple[Agent, ...]
    transitions_global: TransitionModel
    transitions_local: TransitionModel
    handovers: HandoverMatrix
    interarrival: FittedDistribution
    extraneous_delays: Mapping[str, FittedDistribution]
    activities: frozenset[str]
    architecture: str = "orchestrated"
    assignment: str = "iterative"
    default_start: int = 0

    def __post_init__(self) -> None:
        for i, agent in enumerate(self.agents):
            if agent.id != i:
                raise ValueError("agents must be ordered by id, ids 0..n-1")
        if self.architecture not in ("orchestrated", "autonomous"):
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.assignment not in ("iterative", "direct"):
            raise ValueError(f"unknown assignment {self.assignment!r}")
        allocatable = set()
        for agent in self.agents:
            allocatable.update(agent.capabilities.alloc)
        missing = self.activities - allocatable
        if missing:
            raise ValueError(f"activities with no capable agent: {sorted(missing)}")

    def agent_by_name(self, name: str) -> Agent:
        for agent in self.agents:
            if agent.name == name:
                return agent
        raise KeyError(name)


@dataclass(frozen=True)
class DiscoveryOptions:
    granularity: int = 60
    schedule_support: float = 0.1
    type_threshold: float = 0.4
    delay_min_fraction: float = 0.2
    type_level_behavior: bool = False
    max_prefix_len: Optional[int] = None


class _AgentIndex:
    """Deterministic resource/stand-in numbering shared by all discovery steps."""

    def __init__(self, log: EventLog):
        resources = sorted(log.resource_set)
        dummy_activities = sorted(
            {e.activity for e in log.events() if e.resource is None}
        )
        self.resource_ids = {name: i for i, name in enumerate(resources)}
        base = len(resources)
        self.dummy_ids = {act: base + i for i, act in enumerate(dummy_activities)}
        self.size = base + len(dummy_activities)

    def agent_of(self, event: Event) -> int:
        if event.resource is None:
            return self.dummy_ids[event.activity]
        return self.resource_ids[event.resource]


def discover_agents(log: EventLog) -> tuple[Agent, ...]:
    """One agent per resource plus one always-available stand-in per activity
    that has at least one event without resource information."""
    if log.n_cases == 0:
        raise ValueError("cannot discover agents from an empty log")
    index = _AgentIndex(log)
    agents = [
        Agent(id=i, name=name, is_dummy=False)
        for name, i in sorted(index.resource_ids.items(), key=lambda kv: kv[1])
    ]
    agents.extend(
        Agent(id=i, name=missing_resource_label(act), is_dummy=True)
        for act, i in sorted(index.dummy_ids.items(), key=lambda kv: kv[1])
    )
    return tuple(agents)


def _events_by_agent(log: EventLog, index: _AgentIndex) -> dict[int, list[Event]]:
    grouped: dict[int, list[Event]] = {i: [] for i in range(index.size)}
    for event in log.events():
        grouped[index.agent_of(event)].append(event)
    for events in grouped.values():
        events.sort(key=lambda e: (e.ts_start, e.ts_end, e.activity))
    return grouped


def discover_agent_types(
    agents: Sequence[Agent], log: EventLog, threshold: float = 0.4
) -> dict[int, int]:
    """Cluster agents by the similarity of their activity-frequency profiles.

    Average-linkage agglomerative clustering under cosine distance; merging
    stops once the closest pair of clusters is at distance >= threshold.
    Ties are broken toward the clusters containing the lowest agent ids, so
    the result is deterministic.
    """
    activities = sorted(log.activity_set)
    act_pos = {a: k for k, a in enumerate(activities)}
    index = _AgentIndex(log)

    profiles = [[0.0] * len(activities) for _ in agents]
    for event in log.events():
        profiles[index.agent_of(event)][act_pos[event.activity]] += 1.0
    norm_profiles = []
    for row in profiles:
        total = sum(row)
        norm_profiles.append([x / total for x in row] if total else row)

    def cosine_distance(u: Sequence[float], v: Sequence[float]) -> float:
        dot = sum(a * b for a, b in zip(u, v))
        nu = math.sqrt(sum(a * a for a in u))
        nv = math.sqrt(sum(b * b for b in v))
        if nu == 0.0 or nv == 0.0:
            return 0.0 if nu == nv else 1.0
        return 1.0 - dot / (nu * nv)

    # clusters keyed by their lowest member id
    members: dict[int, list[int]] = {a.id: [a.id] for a in agents}
    dist: dict[tuple[int, int], float] = {}
    ids = sorted(members)
    for i_pos, i in enumerate(ids):
        for j in ids[i_pos + 1 :]:
            dist[(i, j)] = cosine_distance(norm_profiles[i], norm_profiles[j])

    while len(members) > 1:
        (i, j), best = min(dist.items(), key=lambda kv: (kv[1], kv[0]))
        if best >= threshold:
            break
        size_i, size_j = len(members[i]), len(members[j])
        members[i].extend(members.pop(j))
        del dist[(i, j)]
        # Lance-Williams update for average linkage
        for k in list(members):
            if k == i:
                continue
            key_ki = (min(i, k), max(i, k))
            key_kj = (min(j, k), max(j, k))
            dist[key_ki] = (size_i * dist[key_ki] + size_j * dist.pop(key_kj)) / (
                size_i + size_j
            )

    types: dict[int, int] = {}
    for type_id, root in enumerate(sorted(members)):
        for agent_id in members[root]:
            types[agent_id] = type_id
    return types


def _schedule_from_events(
    events: Sequence[Event],
    is_dummy: bool,
    granularity: int,
    support: float,
) -> Schedule:
    if is_dummy:
        return Schedule.always(granularity)
    if not events:
        logger.warning("agent without events gets an always-available schedule")
        return Schedule.always(granularity)

    slot_seconds = granularity * 60
    counts: dict[int, int] = {}
    weeks: set[int] = set()
    for event in events:
        for ts in (event.ts_start, event.ts_end):
            slot = week_offset(ts) // slot_seconds
            counts[slot] = counts.get(slot, 0) + 1
            weeks.add(week_index(ts))
    active_weeks = max(len(weeks), 1)
    working = frozenset(s for s, c in counts.items() if c / active_weeks >= support)
    if not working:
        # support threshold filtered everything; keep the observed slots so the
        # agent stays schedulable
        working = frozenset(counts)
    return Schedule(granularity, working, always_available=False)


def discover_schedule(
    log: EventLog, agent: Agent, granularity: int = 60, support: float = 0.1
) -> Schedule:
    """Weekly grid: a slot is working iff the agent's event endpoints hit it in
    at least `support` of the agent's active weeks."""
    index = _AgentIndex(log)
    events = _events_by_agent(log, index).get(agent.id, [])
    return _schedule_from_events(events, agent.is_dummy, granularity, support)


def _capabilities_from_events(events: Sequence[Event]) -> Capabilities:
    samples: dict[str, list[float]] = {}
    for event in events:
        samples.setdefault(event.activity, []).append(float(event.duration))
    durations = {act: fit_distribution(vals) for act, vals in sorted(samples.items())}
    return Capabilities(alloc=frozenset(durations), durations=durations)


def discover_capabilities(log: EventLog, agent: Agent) -> Capabilities:
    """Activities the agent executed, with one fitted duration PDF each."""
    index = _AgentIndex(log)
    events = _events_by_agent(log, index).get(agent.id, [])
    return _capabilities_from_events(events)


def discover_transition_model(
    log: EventLog,
    mode: str,
    agent_groups: Optional[Mapping[int, int]] = None,
    max_prefix_len: Optional[int] = None,
) -> TransitionModel:
    """Count how often each observed activity prefix is followed by each next
    activity (CASE_END after the last event of a trace).

    Global mode counts per prefix; local mode counts per (prefix, performer of
    the prefix's last event), with performers optionally grouped (e.g. by
    agent type) through `agent_groups`.
    """
    if mode not in ("global", "local"):
        raise ValueError(f"unknown transition mode {mode!r}")
    if log.n_cases == 0:
        raise ValueError("cannot discover transitions from an empty log")
    index = _AgentIndex(log)
    groups = dict(agent_groups) if agent_groups else {}

    counts: dict[tuple[tuple[str, ...], Optional[int]], dict[Optional[str], int]] = {}
    for trace in log.traces:
        acts = trace.activities
        first = 0 if mode == "global" else 1
        for k in range(first, len(acts) + 1):
            lo = 0 if max_prefix_len is None else max(0, k - max_prefix_len)
            prefix = acts[lo:k]
            if mode == "global":
                group = None
            else:
                last_agent = index.agent_of(trace.events[k - 1])
                group = groups.get(last_agent, last_agent)
            nxt = acts[k] if k < len(acts) else CASE_END
            counts.setdefault((prefix, group), {}).setdefault(nxt, 0)
            counts[(prefix, group)][nxt] += 1

    table = {}
    for key in sorted(counts, key=lambda k: (k[0], -1 if k[1] is None else k[1])):
        nxt_counts = counts[key]
        total = sum(nxt_counts.values())
        table[key] = {
            nxt: c / total
            for nxt, c in sorted(nxt_counts.items(), key=lambda kv: (kv[0] is None, kv[0] or ""))
        }
    return TransitionModel(
        mode=mode, table=table, max_prefix_len=max_prefix_len, agent_groups=groups
    )


def discover_handover_matrix(log: EventLog) -> HandoverMatrix:
    """Who follows whom: probs[j][i] is the share of agent j's outgoing
    consecutive event pairs handed to agent i.  Rows with no outgoing pair
    stay all-zero."""
    if log.n_cases == 0:
        raise ValueError("cannot discover handovers from an empty log")
    index = _AgentIndex(log)
    n = index.size
    counts = [[0] * n for _ in range(n)]
    for trace in log.traces:
        performers = [index.agent_of(e) for e in trace.events]
        for j, i in zip(performers, performers[1:]):
            counts[j][i] += 1
    rows = []
    for j in range(n):
        total = sum(counts[j])
        if total:
            rows.append(tuple(c / total for c in counts[j]))
        else:
            rows.append(tuple(0.0 for _ in range(n)))
    return HandoverMatrix(tuple(rows))


def discover_interarrival(log: EventLog) -> FittedDistribution:
    """Fit the gaps between consecutive case start times."""
    if log.n_cases < 2:
        raise ValueError("inter-arrival discovery needs at least 2 cases")
    starts = sorted(t.first_start for t in log.traces)
    gaps = [float(b - a) for a, b in zip(starts, starts[1:])]
    return fit_distribution(gaps)


def _subtract_intervals(
    base: list[tuple[int, int]], removals: list[tuple[int, int]]
) -> int:
    """Total length of `base` minus the union of `removals` (both sorted)."""
    total = 0
    r = 0
    for lo, hi in base:
        cursor = lo
        while r < len(removals) and removals[r][1] <= cursor:
            r += 1
        k = r
        while k < len(removals) and removals[k][0] < hi:
            s, e = removals[k]
            if s > cursor:
                total += min(s, hi) - cursor
            cursor = max(cursor, min(e, hi))
            if e >= hi:
                break
            k += 1
        if cursor < hi:
            total += hi - cursor
    return total


def discover_extraneous_delays(
    log: EventLog, agents: Sequence[Agent], min_fraction: float = 0.2
) -> dict[str, FittedDistribution]:
    """Estimate waiting time not explained by the performer being busy or off
    shift.

    For every non-first event, the enablement instant is the previous event's
    end; the residual is the part of the gap up to the event's start during
    which its performer was idle and on shift.  An activity gets a delay PDF
    only when more than `min_fraction` of its (non-first) events show a
    positive residual; the PDF is fitted over those positive residuals.
    """
    index = _AgentIndex(log)
    by_agent = _events_by_agent(log, index)
    agent_by_id = {a.id: a for a in agents}
    merged_cache = {
        aid: agent_by_id[aid].schedule.merged_intervals() if aid in agent_by_id else None
        for aid in by_agent
    }

    residuals: dict[str, list[float]] = {}
    for trace in log.traces:
        for prev, event in zip(trace.events, trace.events[1:]):
            window_lo, window_hi = prev.ts_end, event.ts_start
            bucket = residuals.setdefault(event.activity, [])
            if window_hi <= window_lo:
                bucket.append(0.0)
                continue
            aid = index.agent_of(event)
            agent = agent_by_id.get(aid)
            if agent is None:
                raise ValueError(f"event performer {event.performer!r} has no agent")
            if agent.is_dummy or agent.schedule.always_available:
                on_shift = [(window_lo, window_hi)]
            else:
                on_shift = working_intervals_between(
                    merged_cache[aid], window_lo, window_hi
                )
            busy: list[tuple[int, int]] = []
            if not agent.is_dummy:
                for other in by_agent[aid]:
                    if other is event:
                        continue
                    if other.ts_start >= window_hi:
                        break
                    if other.ts_end > window_lo:
                        busy.append((max(other.ts_start, window_lo), min(other.ts_end, window_hi)))
            bucket.append(float(_subtract_intervals(on_shift, busy)))

    delays: dict[str, FittedDistribution] = {}
    for activity in sorted(residuals):
        values = residuals[activity]
        positives = [v for v in values if v > 0]
        if values and len(positives) / len(values) > min_fraction:
            delays[activity] = fit_distribution(positives)
    return delays


def discover_mas(log: EventLog, options: DiscoveryOptions = DiscoveryOptions()) -> Mas:
    """Run every discovery step and assemble the simulation model.

    Both transition modes and the handover matrix are discovered up front so
    the simulation architecture can be switched without re-mining the log.
    """
    if log.n_cases == 0:
        raise ValueError("cannot discover a model from an empty log")

    skeleton = discover_agents(log)
    types = discover_agent_types(skeleton, log, threshold=options.type_threshold)
    index = _AgentIndex(log)
    by_agent = _events_by_agent(log, index)

    agents = tuple(
        replace(
            agent,
            agent_type=types[agent.id],
            schedule=_schedule_from_events(
                by_agent[agent.id], agent.is_dummy, options.granularity, options.schedule_support
            ),
            capabilities=_capabilities_from_events(by_agent[agent.id]),
        )
        for agent in skeleton
    )

    groups = (
        {a.id: a.agent_type for a in agents}
        if options.type_level_behavior
        else {a.id: a.id for a in agents}
    )
    transitions_global = discover_transition_model(
        log, "global", max_prefix_len=options.max_prefix_len
    )
    transitions_local = discover_transition_model(
        log, "local", agent_groups=groups, max_prefix_len=options.max_prefix_len
    )
    handovers = discover_handover_matrix(log)
    interarrival = discover_interarrival(log)
    delays = discover_extraneous_delays(log, agents, min_fraction=options.delay_min_fraction)

    return Mas(
        agents=agents,
        transitions_global=transitions_global,
        transitions_local=transitions_local,
        handovers=handovers,
        interarrival=interarrival,
        extraneous_delays=delays,
        activities=log.activity_set,
        default_start=min(t.first_start for t in log.traces),
    )
