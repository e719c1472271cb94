"""Resource-centric business process simulation.

Mine a multi-agent model (agents with schedules, capabilities and handover
behavior) from a CSV event log, simulate the process to generate new logs,
and score simulated logs against held-out data.
"""

from .discovery import (
    Agent,
    Capabilities,
    DiscoveryOptions,
    HandoverMatrix,
    Mas,
    Schedule,
    TransitionModel,
    discover_mas,
)
from .distributions import FittedDistribution, fit_distribution, sample_distribution, wasserstein_1d
from .event_log import Event, EventLog, Trace, parse_log, temporal_split, write_log
from .metrics import MetricsReport, compute_report, interaction_matrix
from .model_io import read_model, write_model
from .simulation import SimulationConfig, simulate, simulate_with_warnings

__version__ = "0.1.0"

__all__ = [
    "Agent",
    "Capabilities",
    "DiscoveryOptions",
    "Event",
    "EventLog",
    "FittedDistribution",
    "HandoverMatrix",
    "Mas",
    "MetricsReport",
    "Schedule",
    "SimulationConfig",
    "Trace",
    "TransitionModel",
    "compute_report",
    "discover_mas",
    "fit_distribution",
    "interaction_matrix",
    "parse_log",
    "read_model",
    "sample_distribution",
    "simulate",
    "simulate_with_warnings",
    "temporal_split",
    "wasserstein_1d",
    "write_log",
    "write_model",
]
