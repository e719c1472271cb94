"""Shared fixtures: hand-built logs plus seeded synthetic log generators.

The generators place events with their own scheduling logic (per-resource
working windows, one task at a time), independent of the package under test,
so discovered schedules, durations and waiting behavior can be checked
against known ground truth.
"""

from __future__ import annotations

from bisect import bisect_right, insort

import numpy as np
import pytest

from procsim.event_log import Event, EventLog

# Monday 2024-01-01 00:00:00 UTC
T0 = 1704067200

DAY = 86400
HOUR = 3600


def ev(case, act, start, end, res=None):
    return Event(case_id=case, activity=act, ts_start=start, ts_end=end, resource=res)


def build_log(rows) -> EventLog:
    """rows: (case, activity, start, end, resource) with absolute timestamps."""
    return EventLog.from_events(ev(*row) for row in rows)


# -- generic office-style generator -------------------------------------------


class Pool:
    """A group of resources with a working window and per-resource speed.

    unbounded pools model automated performers: tasks start at enablement
    and never queue on the resource.
    """

    def __init__(self, members, window=None, workdays=(0, 1, 2, 3, 4), speeds=None,
                 unbounded=False):
        self.members = list(members)
        self.window = window  # (start_hour, end_hour) or None for 24/7
        self.workdays = workdays
        self.speeds = speeds or {m: 1.0 for m in self.members}
        self.unbounded = unbounded


def _fit_window(ts: int, duration: int, pool: Pool) -> int:
    if pool.window is None:
        return ts
    start_h, end_h = pool.window
    assert duration <= (end_h - start_h) * HOUR, "task longer than the working window"
    while True:
        day = (ts // DAY + 3) % 7
        day_base = ts - ts % DAY
        win_lo = day_base + start_h * HOUR
        win_hi = day_base + end_h * HOUR
        if day in pool.workdays:
            if ts < win_lo:
                ts = win_lo
                continue
            if ts + duration <= win_hi:
                return ts
        ts = day_base + DAY + start_h * HOUR


def _place(busy: list, enable: int, dur: int, pool: Pool) -> int:
    """First instant >= enable where [t, t+dur) fits the window and collides
    with none of the resource's existing reservations."""
    t = _fit_window(enable, dur, pool)
    while True:
        i = bisect_right(busy, t, key=lambda iv: iv[1])
        if i < len(busy) and busy[i][0] < t + dur:
            t = _fit_window(busy[i][1], dur, pool)
            continue
        insort(busy, (t, t + dur))
        return t


def generate_log(flow, pools, durations, n_cases, seed, arrival_mean, t0=T0,
                 noise=0.25) -> EventLog:
    """Place one trace per case against shared per-resource timelines.

    flow(rng) yields (activity, pool_name_or_None); None means the event has
    no resource and runs instantly at enablement.  Each bounded resource
    executes one task at a time inside its window; a task starts at the first
    instant its (randomly chosen) resource has a fitting idle gap.
    """
    rng = np.random.default_rng(seed)
    timelines = {m: [] for pool in pools.values() for m in pool.members}
    events = []
    arrival = t0
    for c in range(n_cases):
        case_id = f"g{c:05d}"
        enable = arrival
        for act, pool_name in flow(rng):
            base = durations[act]
            if pool_name is None:
                start = enable
                dur = base
                res = None
            else:
                pool = pools[pool_name]
                res = pool.members[int(rng.integers(len(pool.members)))]
                dur = max(1, int(round(base * pool.speeds[res] * rng.lognormal(0.0, noise))))
                if pool.unbounded:
                    start = _fit_window(enable, dur, pool)
                else:
                    start = _place(timelines[res], enable, dur, pool)
            events.append(ev(case_id, act, start, start + dur, res))
            enable = start + dur
        arrival += max(1, int(round(rng.exponential(arrival_mean))))
    return EventLog.from_events(events)


# -- loan-office style: 12 activities, 19 resources ---------------------------


LOAN_POOLS = {
    "sys": Pool(["System"], window=None, unbounded=True),
    "clerk": Pool(
        [f"clerk_{i}" for i in range(8)],
        window=(9, 17),
        speeds={f"clerk_{i}": (1.5 if i < 4 else 0.8) for i in range(8)},
    ),
    "officer": Pool([f"officer_{i}" for i in range(5)], window=(8, 16)),
    "manager": Pool([f"manager_{i}" for i in range(3)], window=(10, 18)),
    "admin": Pool([f"admin_{i}" for i in range(2)], window=(9, 15)),
}

LOAN_DURATIONS = {
    "application received": 60,
    "check completeness": 900,
    "request documents": 600,
    "receive documents": 300,
    "check credit history": 1800,
    "check income sources": 2100,
    "assess eligibility": 2700,
    "reject application": 120,
    "compute offer": 1800,
    "approve offer": 1200,
    "send offer": 120,
    "archive case": 600,
}


def loan_flow(rng):
    yield "application received", "sys"
    yield "check completeness", "clerk"
    if rng.random() < 0.25:
        yield "request documents", "clerk"
        yield "receive documents", "sys"
    yield "check credit history", "clerk"
    yield "check income sources", "clerk"
    yield "assess eligibility", "officer"
    if rng.random() < 0.3:
        yield "reject application", "sys"
        return
    yield "compute offer", "officer"
    yield "approve offer", "manager"
    yield "send offer", "sys"
    if rng.random() < 0.3:
        yield "archive case", "admin"


def make_loan_log(n_cases=1000, seed=101) -> EventLog:
    return generate_log(loan_flow, LOAN_POOLS, LOAN_DURATIONS, n_cases, seed,
                        arrival_mean=7200)


# -- production style: 24 activities, 41 resources, ~20 events per case -------


PROD_POOLS = {
    "machine": Pool([f"machine_{i:02d}" for i in range(20)], window=None),
    "shift_a": Pool([f"op_a{i}" for i in range(6)], window=(0, 8), workdays=tuple(range(7))),
    "shift_b": Pool([f"op_b{i}" for i in range(6)], window=(8, 16), workdays=tuple(range(7))),
    "shift_c": Pool([f"op_c{i}" for i in range(6)], window=(16, 24), workdays=tuple(range(7))),
    "qa": Pool([f"qa_{i}" for i in range(3)], window=(9, 17)),
}

PROD_STEPS = [(f"step_{i:02d}", "machine" if i % 2 == 0 else ("shift_a", "shift_b", "shift_c")[i % 3])
              for i in range(20)]
PROD_DURATIONS = {f"step_{i:02d}": 600 + 120 * (i % 5) for i in range(20)}
PROD_DURATIONS.update({"inspect": 900, "rework": 1500, "final_check": 1200, "pack": 700})


def prod_flow(rng):
    for act, pool in PROD_STEPS[:14]:
        yield act, pool
    yield "inspect", "qa"
    reworks = 0
    while reworks < 2 and rng.random() < 0.3:
        yield "rework", "machine"
        yield "inspect", "qa"
        reworks += 1
    for act, pool in PROD_STEPS[14:17]:
        yield act, pool
    yield "final_check", "qa"
    yield "pack", "shift_b"


def make_production_log(n_cases=225, seed=202) -> EventLog:
    return generate_log(prod_flow, PROD_POOLS, PROD_DURATIONS, n_cases, seed,
                        arrival_mean=25000)


# -- small varied fixtures -----------------------------------------------------


def make_small_logs() -> dict[str, EventLog]:
    """Seven small logs of varied shape (plus the two big ones elsewhere)."""
    logs = {}

    logs["two_cases"] = build_log([
        ("a", "x", T0, T0 + 60, "r1"),
        ("a", "y", T0 + 120, T0 + 300, "r2"),
        ("b", "x", T0 + 400, T0 + 460, "r1"),
        ("b", "y", T0 + 500, T0 + 700, "r2"),
    ])

    single = Pool(["solo"], window=(9, 17))
    logs["single_resource"] = generate_log(
        lambda rng: [("do_a", "p"), ("do_b", "p"), ("do_c", "p")],
        {"p": single},
        {"do_a": 600, "do_b": 900, "do_c": 300},
        n_cases=40, seed=7, arrival_mean=4000,
    )

    def missing_flow(rng):
        yield "auto_intake", None
        yield "manual_review", "h"
        yield "auto_close", None

    logs["missing_heavy"] = generate_log(
        missing_flow,
        {"h": Pool(["hr_1", "hr_2"], window=(9, 17))},
        {"auto_intake": 5, "manual_review": 1200, "auto_close": 5},
        n_cases=60, seed=8, arrival_mean=3000,
    )

    logs["constant_durations"] = generate_log(
        lambda rng: [("fetch", "w"), ("process", "w")],
        {"w": Pool(["w1", "w2"], window=None)},
        {"fetch": 300, "process": 600},
        n_cases=50, seed=9, arrival_mean=900, noise=0.0,
    )

    logs["weekend_crew"] = generate_log(
        lambda rng: [("open", "wk"), ("close", "wk")],
        {"wk": Pool(["sat_1", "sun_1"], window=(10, 16), workdays=(5, 6))},
        {"open": 900, "close": 600},
        n_cases=30, seed=10, arrival_mean=20000,
    )

    logs["fixed_arrivals"] = generate_log(
        lambda rng: [("tick", "m"), ("tock", "m")],
        {"m": Pool(["mach"], window=None)},
        {"tick": 60, "tock": 120},
        n_cases=40, seed=11, arrival_mean=1,
    )

    def branchy_flow(rng):
        yield "start", None
        pick = int(rng.integers(4))
        yield f"route_{pick}", "ops"
        yield "finish", "ops"

    logs["branch_heavy"] = generate_log(
        branchy_flow,
        {"ops": Pool([f"o{i}" for i in range(4)], window=(6, 20))},
        {"start": 5, "route_0": 300, "route_1": 600, "route_2": 900, "route_3": 1200, "finish": 200},
        n_cases=80, seed=12, arrival_mean=1500,
    )

    return logs


# -- validators shared with the acceptance suite --------------------------------


def validate_simulated_log(mas, log) -> None:
    """Capability, per-agent non-overlap and timestamp-order invariants."""
    agents = {a.name: a for a in mas.agents}
    windows: dict[str, list[tuple[int, int]]] = {}
    for trace in log.traces:
        for event in trace.events:
            assert event.ts_end >= event.ts_start
            agent = agents[event.resource]
            assert event.activity in agent.capabilities.alloc, (
                f"{event.resource} cannot perform {event.activity}"
            )
            if not agent.is_dummy:
                windows.setdefault(event.resource, []).append((event.ts_start, event.ts_end))
    for name, spans in windows.items():
        spans.sort()
        for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
            assert e1 <= s2, f"agent {name} overlaps: [{s1},{e1}) and [{s2},{e2})"


def assert_replayable(mas, architecture: str, log) -> None:
    """Every simulated activity step must have positive model probability."""
    ids = {a.name: a.id for a in mas.agents}

    def step_probs(prefix, last_agent):
        if not prefix:
            return mas.transitions_global.lookup((), None)
        if architecture == "autonomous":
            probs = mas.transitions_local.lookup(prefix, last_agent)
            if probs is not None:
                return probs
        return mas.transitions_global.lookup(prefix, None)

    for trace in log.traces:
        prefix: list[str] = []
        last_agent = None
        for event in trace.events:
            probs = step_probs(prefix, last_agent)
            assert probs is not None and probs.get(event.activity, 0.0) > 0.0, (
                f"{trace.case_id}: {event.activity!r} impossible after {tuple(prefix)!r}"
            )
            prefix.append(event.activity)
            last_agent = ids[event.resource]
        end_probs = step_probs(prefix, last_agent)
        assert end_probs is not None and end_probs.get(None, 0.0) > 0.0, (
            f"{trace.case_id}: case end impossible after {tuple(prefix)!r}"
        )


# -- pytest fixtures -----------------------------------------------------------


@pytest.fixture(scope="session")
def loan_log() -> EventLog:
    return make_loan_log()


@pytest.fixture(scope="session")
def production_log() -> EventLog:
    return make_production_log()


@pytest.fixture(scope="session")
def small_logs() -> dict[str, EventLog]:
    return make_small_logs()


@pytest.fixture(scope="session")
def office_log() -> EventLog:
    """Mid-sized 9-to-17 weekday log spanning ~4 weeks."""
    return generate_log(
        lambda rng: [("prepare", "staff"), ("handle", "staff"), ("wrap_up", "staff")],
        {"staff": Pool(["ann", "ben", "cleo"], window=(9, 17))},
        {"prepare": 900, "handle": 2400, "wrap_up": 600},
        n_cases=300, seed=33, arrival_mean=9000,
    )
