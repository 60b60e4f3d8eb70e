"""reposim: a partitioned agent-based simulator for GitHub-style event
ecosystems -- fit per-user behavioral models from an event log, simulate a
future window of (time, eventType, userID, repoID) events, and evaluate
fidelity against held-out ground truth."""

__version__ = "0.1.0"

from .core import Event, EventLog, EventType, is_one_time, parse_event_type
from .engine import SimulationConfig, run, schedule_agents
from .ingest import build_bipartite, build_slice, load_events, save_events
from .metrics import EvalConfig, MetricReport, evaluate
from .partition import build_interaction_graph, partition_graph
from .synth import SynthConfig, generate

__all__ = [
    "__version__",
    "Event",
    "EventLog",
    "EventType",
    "is_one_time",
    "parse_event_type",
    "SimulationConfig",
    "run",
    "schedule_agents",
    "build_bipartite",
    "build_slice",
    "load_events",
    "save_events",
    "EvalConfig",
    "MetricReport",
    "evaluate",
    "build_interaction_graph",
    "partition_graph",
    "SynthConfig",
    "generate",
]
