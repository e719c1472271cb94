"""JSON serialization of a discovered model.

The file written here is the contract between the `discover` and `simulate`
commands: one JSON tree holding agents (schedules, capabilities), both
transition tables, the handover matrix and the global parameters.  Writing is
deterministic (sorted keys, exact float round-trip) so identical models
produce identical bytes.
"""

from __future__ import annotations

import json
from typing import Any

from .discovery import (
    Agent,
    Capabilities,
    HandoverMatrix,
    Mas,
    Schedule,
    TransitionModel,
)
from .distributions import FittedDistribution

__all__ = ["FORMAT_TAG", "mas_to_dict", "mas_from_dict", "write_model", "read_model"]

FORMAT_TAG = "procsim-model/1"


def _dist_to_dict(dist: FittedDistribution) -> dict[str, Any]:
    return {
        "family": dist.family,
        "params": list(dist.params),
        "fit_error": dist.fit_error,
    }


def _dist_from_dict(data: dict[str, Any]) -> FittedDistribution:
    return FittedDistribution(
        family=data["family"],
        params=tuple(float(p) for p in data["params"]),
        fit_error=float(data.get("fit_error", 0.0)),
    )


def _transitions_to_list(model: TransitionModel) -> list[dict[str, Any]]:
    entries = []
    for (prefix, group), probs in sorted(
        model.table.items(), key=lambda kv: (kv[0][0], -1 if kv[0][1] is None else kv[0][1])
    ):
        entries.append(
            {
                "prefix": list(prefix),
                "group": group,
                "next": [[nxt, p] for nxt, p in probs.items()],
            }
        )
    return entries


def _transitions_from_list(
    entries: list[dict[str, Any]], mode: str, agent_groups: dict[int, int], max_prefix_len
) -> TransitionModel:
    table = {}
    for entry in entries:
        key = (tuple(entry["prefix"]), entry["group"])
        table[key] = {nxt: float(p) for nxt, p in entry["next"]}
    return TransitionModel(
        mode=mode, table=table, max_prefix_len=max_prefix_len, agent_groups=agent_groups
    )


def mas_to_dict(mas: Mas, use_extraneous_delays: bool = False) -> dict[str, Any]:
    return {
        "format": FORMAT_TAG,
        "activities": sorted(mas.activities),
        "architecture": mas.architecture,
        "assignment": mas.assignment,
        "use_extraneous_delays": use_extraneous_delays,
        "default_start": mas.default_start,
        "agents": [
            {
                "id": agent.id,
                "name": agent.name,
                "type": agent.agent_type,
                "is_dummy": agent.is_dummy,
                "schedule": {
                    "granularity": agent.schedule.granularity,
                    "always_available": agent.schedule.always_available,
                    "working_slots": sorted(agent.schedule.working),
                },
                "capabilities": {
                    act: _dist_to_dict(agent.capabilities.durations[act])
                    for act in sorted(agent.capabilities.alloc)
                },
            }
            for agent in mas.agents
        ],
        "transitions": {
            "global": _transitions_to_list(mas.transitions_global),
            "local": _transitions_to_list(mas.transitions_local),
            "agent_groups": {str(a): g for a, g in sorted(mas.transitions_local.agent_groups.items())},
            "max_prefix_len": mas.transitions_global.max_prefix_len,
        },
        "handovers": [list(row) for row in mas.handovers.probs],
        "interarrival": _dist_to_dict(mas.interarrival),
        "extraneous_delays": {
            act: _dist_to_dict(dist) for act, dist in sorted(mas.extraneous_delays.items())
        },
    }


def mas_from_dict(data: dict[str, Any]) -> tuple[Mas, dict[str, Any]]:
    """Rebuild a model; returns (mas, meta) where meta carries file-level
    defaults that are not part of the model itself."""
    if data.get("format") != FORMAT_TAG:
        raise ValueError(f"not a {FORMAT_TAG} file (format: {data.get('format')!r})")

    agents = []
    for entry in data["agents"]:
        sched = entry["schedule"]
        durations = {act: _dist_from_dict(d) for act, d in entry["capabilities"].items()}
        agents.append(
            Agent(
                id=entry["id"],
                name=entry["name"],
                agent_type=entry["type"],
                is_dummy=entry["is_dummy"],
                schedule=Schedule(
                    granularity=sched["granularity"],
                    working=frozenset(sched["working_slots"]),
                    always_available=sched["always_available"],
                ),
                capabilities=Capabilities(alloc=frozenset(durations), durations=durations),
            )
        )

    trans = data["transitions"]
    agent_groups = {int(a): g for a, g in trans["agent_groups"].items()}
    max_prefix_len = trans["max_prefix_len"]
    mas = Mas(
        agents=tuple(agents),
        transitions_global=_transitions_from_list(trans["global"], "global", {}, max_prefix_len),
        transitions_local=_transitions_from_list(
            trans["local"], "local", agent_groups, max_prefix_len
        ),
        handovers=HandoverMatrix(tuple(tuple(float(x) for x in row) for row in data["handovers"])),
        interarrival=_dist_from_dict(data["interarrival"]),
        extraneous_delays={
            act: _dist_from_dict(d) for act, d in data["extraneous_delays"].items()
        },
        activities=frozenset(data["activities"]),
        architecture=data["architecture"],
        assignment=data["assignment"],
        default_start=data["default_start"],
    )
    meta = {"use_extraneous_delays": bool(data.get("use_extraneous_delays", False))}
    return mas, meta


def write_model(mas: Mas, path, use_extraneous_delays: bool = False) -> None:
    payload = mas_to_dict(mas, use_extraneous_delays=use_extraneous_delays)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_model(path) -> tuple[Mas, dict[str, Any]]:
    with open(path) as fh:
        data = json.load(fh)
    return mas_from_dict(data)
