"""Discrete-event execution of a discovered multi-agent process model.

Cases arrive according to the inter-arrival distribution and are processed
first-in-first-out.  For each waiting case the next activity is sampled from
the transition model (global or per-agent, per the configured architecture),
a responsible agent is chosen, and the activity is executed by sampling that
agent's duration distribution.  The clock jumps between decision points (next
arrival, next completion, next working-slot boundary) instead of ticking,
which is behavior-preserving because nothing can change in between.

All randomness flows through one seeded generator with a fixed draw order --
arrival gap, next activity, (direct mode: agent,) then duration and delay per
asked candidate -- so a run is a pure function of (model, config).
"""

from __future__ import annotations

import heapq
import logging
from bisect import bisect_right, insort
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .discovery import CASE_END, Agent, Mas, TransitionModel, week_offset, WEEK_SECONDS
from .distributions import sample_distribution
from .event_log import Event, EventLog

__all__ = [
    "SimulationConfig",
    "CaseState",
    "AgentRuntime",
    "Assignment",
    "Engine",
    "ModelError",
    "next_activity",
    "earliest_availability",
    "select_agent",
    "simulate",
    "simulate_with_warnings",
]

logger = logging.getLogger(__name__)

_UNBOUNDED = 1 << 62


class ModelError(ValueError):
    """A simulation model is internally inconsistent (corrupt or hand-built wrong)."""


@dataclass(frozen=True)
class SimulationConfig:
    n_cases: int
    seed: int
    start_time: int
    architecture: str = "orchestrated"
    assignment: str = "iterative"
    use_extraneous_delays: bool = False
    evaluation_mode: bool = False
    horizon_days: int = 30

    def __post_init__(self) -> None:
        if self.n_cases < 1:
            raise ValueError("n_cases must be positive")
        if self.horizon_days < 1:
            raise ValueError("horizon_days must be positive")
        if self.architecture not in ("orchestrated", "autonomous"):
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.assignment not in ("iterative", "direct"):
            raise ValueError(f"unknown assignment {self.assignment!r}")
        if self.assignment == "direct" and self.architecture != "autonomous":
            raise ValueError("direct assignment requires the autonomous architecture")


@dataclass
class CaseState:
    case_id: str
    arrival_order: int
    enabled_at: int
    waiting: bool = True
    prefix: list[str] = field(default_factory=list)
    last_agent: Optional[int] = None
    events: list[tuple[str, int, int, int]] = field(default_factory=list)  # act, start, end, agent


class AgentRuntime:
    """Mutable per-run view of one agent: occupied intervals plus schedule math."""

    __slots__ = ("agent", "intervals", "always", "is_dummy", "busy", "queue_tail", "max_run")

    def __init__(self, agent: Agent):
        self.agent = agent
        self.intervals = agent.schedule.merged_intervals()
        # full weekly coverage behaves exactly like an always-available agent
        self.always = agent.schedule.always_available or self.intervals == ((0, WEEK_SECONDS),)
        self.is_dummy = agent.is_dummy
        self.busy: list[tuple[int, int]] = []  # disjoint, sorted
        self.queue_tail = 0  # FIFO floor for directly assigned work
        self.max_run = self._max_run()

    def _max_run(self) -> int:
        if self.always or self.intervals == ((0, WEEK_SECONDS),):
            return _UNBOUNDED
        if not self.intervals:
            return 0
        wrap = self.intervals[-1][1] == WEEK_SECONDS and self.intervals[0][0] == 0
        best = 0
        for k, (s, e) in enumerate(self.intervals):
            run = e - s
            if wrap and k == len(self.intervals) - 1:
                run += self.intervals[0][1]
            best = max(best, run)
        return best

    def _run_from(self, ts: int) -> int:
        """Contiguous on-shift seconds starting exactly at ts (0 when off shift)."""
        if self.always:
            return _UNBOUNDED
        off = week_offset(ts)
        idx = bisect_right(self.intervals, off, key=lambda iv: iv[0]) - 1
        if idx < 0 or self.intervals[idx][1] <= off:
            return 0
        end = self.intervals[idx][1]
        run = end - off
        if end == WEEK_SECONDS and self.intervals[0][0] == 0 and idx != 0:
            run += self.intervals[0][1]
        return run

    def fits_schedule(self, ts: int, duration: int) -> bool:
        run = self._run_from(ts)
        return run > 0 and run >= duration

    def _earliest_schedule_fit(self, ts: int, duration: int, limit: int) -> Optional[int]:
        """Earliest t >= ts whose contiguous on-shift run covers `duration`."""
        if self.always:
            return ts
        if duration > self.max_run:
            return None
        t = ts
        while t < limit:
            off = week_offset(t)
            base = t - off
            idx = bisect_right(self.intervals, off, key=lambda iv: iv[0]) - 1
            if idx >= 0 and self.intervals[idx][1] > off:
                candidate = t
            else:
                idx += 1
                if idx >= len(self.intervals):
                    t = base + WEEK_SECONDS
                    continue
                candidate = base + self.intervals[idx][0]
            if self.fits_schedule(candidate, duration):
                return candidate if candidate < limit else None
            # advance past the too-short interval
            t = base + self.intervals[idx][1]
        return None

    def first_free(self, ts: int) -> int:
        """Earliest t >= ts outside every occupied interval (schedule ignored)."""
        t = ts
        idx = bisect_right(self.busy, t, key=lambda iv: iv[1])
        while idx < len(self.busy) and self.busy[idx][0] <= t:
            t = self.busy[idx][1]
            idx += 1
        return t

    def blocked_until(self, ts: int, duration: int) -> Optional[int]:
        """End of the reservation colliding with [ts, ts+duration), if any."""
        idx = bisect_right(self.busy, ts, key=lambda iv: iv[1])
        if idx < len(self.busy) and self.busy[idx][0] < ts + max(duration, 1):
            return self.busy[idx][1]
        return None

    def accepts_now(self, clock: int, window: int) -> bool:
        """Schedule-and-occupation check for executing [clock, clock+window) now."""
        if self.is_dummy:
            return True
        if not self.fits_schedule(clock, window):
            return False
        return self.blocked_until(clock, window) is None

    def earliest_availability(self, clock: int, duration: int, horizon_days: int) -> Optional[int]:
        if self.is_dummy:
            return clock
        limit = clock + horizon_days * 86400
        t = clock
        while t < limit:
            t = self._earliest_schedule_fit(t, duration, limit)
            if t is None:
                return None
            blocked = self.blocked_until(t, duration)
            if blocked is None:
                return t
            t = blocked
        return None

    def reserve(self, start: int, end: int) -> None:
        if self.is_dummy or end <= start:
            return
        insort(self.busy, (start, end))


def earliest_availability(
    runtime: AgentRuntime, clock: int, duration: int, horizon_days: int = 30
) -> Optional[int]:
    """Earliest t >= clock where [t, t+duration) fits the agent's working
    slots and collides with no occupied interval; None when nothing fits
    within the horizon."""
    if duration < 0:
        raise ValueError("duration must be nonnegative")
    return runtime.earliest_availability(clock, duration, horizon_days)


def _sample_categorical(probs: Mapping, rng: np.random.Generator):
    u = rng.random()
    acc = 0.0
    last = None
    for value, p in probs.items():
        if p <= 0.0:
            continue
        acc += p
        last = value
        if u < acc:
            return value
    return last


def next_activity(
    model: TransitionModel,
    prefix: Sequence[str],
    agent_id: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> Optional[str]:
    """Sample the next activity (CASE_END marks completion) after a prefix,
    backing off to the longest stored suffix of the prefix."""
    probs = model.lookup(prefix, agent_id)
    if probs is None:
        raise ModelError(f"transition model has no entry for any suffix of {tuple(prefix)!r}")
    if rng is None:
        rng = np.random.default_rng()
    return _sample_categorical(probs, rng)


@dataclass(frozen=True)
class Assignment:
    agent_id: int
    start: int
    duration: int
    delay: int

    @property
    def end(self) -> int:
        return self.start + self.duration + self.delay


class Engine:
    """Runtime state of one simulation: agent runtimes, candidate sets, RNG."""
    def __init__(self, mas: Mas, config: SimulationConfig):
        self.mas = mas
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.runtimes = {a.id: AgentRuntime(a) for a in mas.agents}
        self.candidates: dict[str, list[int]] = {}
        for agent in mas.agents:
            for act in agent.capabilities.alloc:
                self.candidates.setdefault(act, []).append(agent.id)
        for ids in self.candidates.values():
            ids.sort()
        self.boundary_steps = sorted({a.schedule.granularity * 60 for a in mas.agents}) or [3600]
        self.warnings: list[str] = []

    # -- sampling ---------------------------------------------------------

    def _draw_seconds(self, dist) -> int:
        return int(round(sample_distribution(dist, self.rng)))

    def _draw_duration_and_delay(self, agent_id: int, activity: str) -> tuple[int, int]:
        duration = self._draw_seconds(
            self.runtimes[agent_id].agent.capabilities.durations[activity]
        )
        delay = 0
        if self.config.use_extraneous_delays:
            dist = self.mas.extraneous_delays.get(activity)
            if dist is not None:
                delay = self._draw_seconds(dist)
        return duration, delay

    def _determine_activity(self, case: CaseState) -> Optional[str]:
        """First activity is always global; afterwards the architecture decides.
        A per-agent lookup that knows no suffix falls back to the global table."""
        if not case.prefix:
            probs = self.mas.transitions_global.lookup((), None)
        elif self.config.architecture == "orchestrated":
            probs = self.mas.transitions_global.lookup(case.prefix, None)
        else:
            probs = self.mas.transitions_local.lookup(case.prefix, case.last_agent)
            if probs is None:
                probs = self.mas.transitions_global.lookup(case.prefix, None)
        if probs is None:
            raise ModelError(f"no transition entry for prefix {tuple(case.prefix)!r}")
        return _sample_categorical(probs, self.rng)

    # -- agent selection --------------------------------------------------

    def _availability_key(self, agent_id: int, clock: int):
        avail = self.runtimes[agent_id].earliest_availability(
            clock, 0, self.config.horizon_days
        )
        return (avail is None, avail if avail is not None else 0, agent_id)

    def _ask_in_order(self, ordered: list[int], activity: str, clock: int) -> Optional[Assignment]:
        for agent_id in ordered:
            duration, delay = self._draw_duration_and_delay(agent_id, activity)
            if self.runtimes[agent_id].accepts_now(clock, duration + delay):
                return Assignment(agent_id, clock, duration, delay)
        return None

    def _select_iterative(self, case: CaseState, activity: str, clock: int) -> Optional[Assignment]:
        """Ask candidates in order until one accepts executing at the clock.

        Orchestrated order: ascending instant of next free-and-on-shift time
        (ties by agent id).  Autonomous order: descending handover probability
        from the case's last agent; zero-probability candidates follow in
        availability order.  A case's first event always uses the
        orchestrated order.
        """
        ids = self.candidates[activity]
        autonomous = (
            self.config.architecture == "autonomous"
            and case.last_agent is not None
            and case.prefix
        )
        if autonomous:
            row = self.mas.handovers.row(case.last_agent)
            ranked = sorted(
                (a for a in ids if row[a] > 0.0), key=lambda a: (-row[a], a)
            )
            rest = sorted(
                (a for a in ids if row[a] <= 0.0),
                key=lambda a: self._availability_key(a, clock),
            )
            ordered = ranked + rest
        else:
            ordered = sorted(ids, key=lambda a: self._availability_key(a, clock))
        return self._ask_in_order(ordered, activity, clock)

    def _select_direct(self, case: CaseState, activity: str, clock: int) -> Optional[Assignment]:
        """Hand the task to one agent sampled by handover probability; it runs
        the task at its earliest availability, after its earlier direct tasks.
        Falls back to iterative asking when no capable candidate has handover
        mass from the last agent."""
        ids = self.candidates[activity]
        row = self.mas.handovers.row(case.last_agent)
        weights = {a: row[a] for a in ids if row[a] > 0.0}
        if not weights:
            return self._select_iterative(case, activity, clock)
        total = sum(weights.values())
        agent_id = _sample_categorical(
            {a: w / total for a, w in weights.items()}, self.rng
        )
        duration, delay = self._draw_duration_and_delay(agent_id, activity)
        runtime = self.runtimes[agent_id]
        floor = max(clock, runtime.queue_tail)
        start = runtime.earliest_availability(floor, duration + delay, self.config.horizon_days)
        if start is None:
            start = runtime.first_free(floor)
            self.warnings.append(
                f"direct task {activity!r} for agent {runtime.agent.name!r} fits no "
                f"working block within {self.config.horizon_days} days; scheduled off-calendar"
            )
        runtime.queue_tail = start + duration + delay
        return Assignment(agent_id, start, duration, delay)

    def select_agent(self, case: CaseState, activity: str, clock: int) -> Optional[Assignment]:
        if activity not in self.candidates:
            raise ModelError(f"no agent can perform activity {activity!r}")
        direct = (
            self.config.architecture == "autonomous"
            and self.config.assignment == "direct"
            and case.prefix  # a case's first event is allocated iteratively
            and case.last_agent is not None
        )
        if direct:
            return self._select_direct(case, activity, clock)
        return self._select_iterative(case, activity, clock)

    # -- bookkeeping ------------------------------------------------------

    def execute(self, case: CaseState, activity: str, assignment: Assignment) -> None:
        runtime = self.runtimes[assignment.agent_id]
        runtime.reserve(assignment.start, assignment.end)
        case.events.append((activity, assignment.start, assignment.end, assignment.agent_id))
        case.prefix.append(activity)
        case.last_agent = assignment.agent_id
        case.waiting = False

    def force_schedule(self, case: CaseState, clock: int) -> bool:
        """Livelock guard: run the case's next activity ignoring calendars."""
        activity = self._determine_activity(case)
        if activity is CASE_END:
            return True
        ids = self.candidates.get(activity)
        if not ids:
            raise ModelError(f"no agent can perform activity {activity!r}")
        agent_id = min(ids, key=lambda a: (self.runtimes[a].first_free(clock), a))
        duration, delay = self._draw_duration_and_delay(agent_id, activity)
        runtime = self.runtimes[agent_id]
        start = runtime.first_free(clock)
        while True:
            blocked = runtime.blocked_until(start, duration + delay)
            if blocked is None:
                break
            start = blocked
        self.warnings.append(
            f"case {case.case_id}: no progress for {self.config.horizon_days} days; "
            f"forced {activity!r} onto agent {runtime.agent.name!r} ignoring its calendar"
        )
        self.execute(case, activity, Assignment(agent_id, start, duration, delay))
        return False

    def next_boundary(self, clock: int) -> int:
        return min((clock // step + 1) * step for step in self.boundary_steps)


def simulate_with_warnings(mas: Mas, config: SimulationConfig) -> tuple[EventLog, list[str]]:
    """Run the simulation; returns the generated log plus guard warnings."""
    engine = Engine(mas, config)
    horizon_seconds = config.horizon_days * 86400

    waiting: list[CaseState] = []
    in_flight: list[tuple[int, int, CaseState]] = []
    completed: list[CaseState] = []
    seq = 0

    clock = config.start_time
    last_progress = clock
    arrival_count = 0
    next_arrival: Optional[int] = config.start_time

    def spawn(arrived_at: int) -> CaseState:
        nonlocal arrival_count
        case = CaseState(
            case_id=f"case_{arrival_count:06d}",
            arrival_order=arrival_count,
            enabled_at=arrived_at,
        )
        arrival_count += 1
        return case

    # in regular mode a zero-gap inter-arrival distribution (e.g. Fixed(0))
    # would spawn forever; cap the simultaneous backlog instead
    max_backlog = max(10_000, 10 * config.n_cases)

    while len(completed) < config.n_cases:
        while next_arrival is not None and next_arrival <= clock:
            waiting.append(spawn(next_arrival))
            last_progress = clock
            if config.evaluation_mode and arrival_count >= config.n_cases:
                next_arrival = None
            else:
                if len(waiting) + len(in_flight) > max_backlog:
                    raise RuntimeError(
                        "arrival backlog exceeded "
                        f"{max_backlog} cases; inter-arrival gaps are too small"
                    )
                next_arrival += engine._draw_seconds(mas.interarrival)

        while in_flight and in_flight[0][0] <= clock:
            end, _, case = heapq.heappop(in_flight)
            case.waiting = True
            case.enabled_at = end
            waiting.append(case)

        waiting.sort(key=lambda c: (c.enabled_at, c.arrival_order))
        still_waiting: list[CaseState] = []
        done = False
        for pos, case in enumerate(waiting):
            activity = engine._determine_activity(case)
            if activity is CASE_END:
                completed.append(case)
                last_progress = clock
                if len(completed) >= config.n_cases:
                    done = True
                    still_waiting.extend(waiting[pos + 1 :])
                    break
                continue
            assignment = engine.select_agent(case, activity, clock)
            if assignment is None:
                still_waiting.append(case)
            else:
                engine.execute(case, activity, assignment)
                seq += 1
                heapq.heappush(in_flight, (assignment.end, seq, case))
                last_progress = clock
        waiting = still_waiting
        if done:
            break

        candidates = []
        if next_arrival is not None:
            candidates.append(next_arrival)
        if in_flight:
            candidates.append(in_flight[0][0])
        if waiting:
            candidates.append(engine.next_boundary(clock))
        if not candidates:
            raise RuntimeError("simulation stalled: nothing scheduled and nothing waiting")
        new_clock = min(candidates)

        if waiting and new_clock - last_progress >= horizon_seconds:
            clock = new_clock
            stuck = min(waiting, key=lambda c: (c.enabled_at, c.arrival_order))
            ended = engine.force_schedule(stuck, clock)
            waiting.remove(stuck)
            if ended:
                completed.append(stuck)
            else:
                seq += 1
                heapq.heappush(in_flight, (stuck.events[-1][2], seq, stuck))
            last_progress = clock
        else:
            clock = new_clock

    agents_by_id = {a.id: a for a in mas.agents}
    events = [
        Event(
            case_id=case.case_id,
            activity=act,
            ts_start=start,
            ts_end=end,
            resource=agents_by_id[agent_id].name,
        )
        for case in completed
        for act, start, end, agent_id in case.events
    ]
    return EventLog.from_events(events), engine.warnings


def simulate(mas: Mas, config: SimulationConfig) -> EventLog:
    """Simulate `config.n_cases` completed cases; deterministic in (mas, config)."""
    log, _ = simulate_with_warnings(mas, config)
    return log


def select_agent(
    engine_state, case: CaseState, activity: str, clock: int
) -> Optional[Assignment]:
    """Allocation rule shared by the engine; exposed for direct use in tests."""
    return engine_state.select_agent(case, activity, clock)
