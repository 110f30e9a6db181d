"""Decentralized cooperative maneuver planning with hierarchical
decoupled-UCT tree search, plus a benchmark scenario simulator."""

from .actions import AgentDesire, MacroActionKind, MacroParams
from .planner import EpisodeLog, replan_consistency_check, run_episode
from .reward import RewardWeights
from .scenarios import ScenarioConfig, builtin, parse, serialize
from .search import DecoupledSearch, SearchParams, run_search
from .world import (
    PrimitiveAction,
    RoadGeometry,
    VehicleState,
    WorldParams,
    WorldState,
)

__all__ = [
    "AgentDesire",
    "DecoupledSearch",
    "EpisodeLog",
    "MacroActionKind",
    "MacroParams",
    "PrimitiveAction",
    "RewardWeights",
    "RoadGeometry",
    "ScenarioConfig",
    "SearchParams",
    "VehicleState",
    "WorldParams",
    "WorldState",
    "builtin",
    "parse",
    "replan_consistency_check",
    "run_episode",
    "run_search",
    "serialize",
]

__version__ = "0.1.0"
