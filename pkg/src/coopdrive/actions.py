"""Hierarchical action graph: macro-action kinds, their primitive sets and
initiation/termination predicates.

Macro-action policies are not hand-coded; they are learned inside the search.
Only the initial and terminal conditions are fixed here.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .world import (
    PrimitiveAction,
    RoadGeometry,
    VehicleState,
    WorldState,
)


class MacroActionKind(str, Enum):
    """Macro-action identifiers; str mixin for C-level hashing in the search
    statistics tables."""

    ROOT = "root"
    OVERTAKE = "overtake"
    MERGE_IN = "merge_in"
    MAKE_ROOM = "make_room"
    TO_DESIRED_VELOCITY = "to_desired_velocity"


MACROS: tuple[MacroActionKind, ...] = (
    MacroActionKind.OVERTAKE,
    MacroActionKind.MERGE_IN,
    MacroActionKind.MAKE_ROOM,
    MacroActionKind.TO_DESIRED_VELOCITY,
)
MACRO_INDEX = {m: i for i, m in enumerate(MACROS)}

_PRIMITIVE_SETS: dict[MacroActionKind, frozenset[PrimitiveAction]] = {
    MacroActionKind.OVERTAKE: frozenset(
        {
            PrimitiveAction.LANE_LEFT,
            PrimitiveAction.LANE_RIGHT,
            PrimitiveAction.ACCELERATE,
            PrimitiveAction.DO_NOTHING,
        }
    ),
    MacroActionKind.MERGE_IN: frozenset(PrimitiveAction),
    MacroActionKind.MAKE_ROOM: frozenset(PrimitiveAction),
    MacroActionKind.TO_DESIRED_VELOCITY: frozenset(
        {
            PrimitiveAction.ACCELERATE,
            PrimitiveAction.DECELERATE,
            PrimitiveAction.DO_NOTHING,
        }
    ),
}


@dataclass(frozen=True, slots=True)
class AgentDesire:
    """What the agent strives for: a velocity, a lane, and how cooperative
    it is (0 = egoistic, 1 = fully cooperative)."""

    v_des: float
    l_des: int
    cooperation: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.cooperation <= 1.0:
            raise ValueError("cooperation factor must lie in [0, 1]")


@dataclass(frozen=True, slots=True)
class MacroParams:
    """Tunable constants of the initiation/termination predicates."""

    lookahead: float = 100.0  # slower-lead search horizon for overtake
    clearance: float = 2.0    # extra longitudinal gap beyond one car length
    v_tol: float = 0.5        # "at desired velocity" tolerance
    make_room_beta: float = 0.3  # per-step termination probability


@dataclass(frozen=True, slots=True)
class MacroActionDef:
    kind: MacroActionKind
    primitive_set: frozenset[PrimitiveAction]
    children: tuple[MacroActionKind, ...] = ()


def macro_action_defs() -> dict[MacroActionKind, MacroActionDef]:
    defs = {k: MacroActionDef(k, s) for k, s in _PRIMITIVE_SETS.items()}
    defs[MacroActionKind.ROOT] = MacroActionDef(MacroActionKind.ROOT, frozenset(), MACROS)
    return defs


def primitive_set(kind: MacroActionKind) -> frozenset[PrimitiveAction]:
    if kind is MacroActionKind.ROOT:
        raise ValueError("root selects macro-actions, not primitives")
    return _PRIMITIVE_SETS[kind]


def lead_vehicle(
    world: WorldState, agent: int, lookahead: float
) -> Optional[VehicleState]:
    """Nearest vehicle ahead in the agent's lane and direction of travel."""
    ego = world.vehicle(agent)
    forward = ego.v >= 0.0
    best = None
    best_gap = lookahead
    for veh in world.vehicles:
        if veh.id == agent or veh.lane != ego.lane:
            continue
        gap = (veh.x - ego.x) if forward else (ego.x - veh.x)
        if 0.0 < gap <= best_gap:
            best = veh
            best_gap = gap
    return best


def overtake_target(
    world: WorldState,
    agent: int,
    desire: AgentDesire,
    params: MacroParams = MacroParams(),
) -> Optional[int]:
    """Id of the slower lead vehicle an overtake would pass, if any.

    "Slower" compares the lead's speed against the ego's desired speed: a lead
    below the ego's target blocks the desire even when current speeds match.
    """
    lead = lead_vehicle(world, agent, params.lookahead)
    if lead is None:
        return None
    if abs(lead.v) < abs(desire.v_des):
        return lead.id
    return None


def initiation(
    kind: MacroActionKind,
    world: WorldState,
    agent: int,
    desire: AgentDesire,
    road: RoadGeometry,
    params: MacroParams = MacroParams(),
) -> bool:
    ego = world.vehicle(agent)
    if kind is MacroActionKind.OVERTAKE:
        if ego.lane >= road.lane_count - 1:
            return False
        return overtake_target(world, agent, desire, params) is not None
    if kind is MacroActionKind.MERGE_IN:
        return ego.lane != desire.l_des
    if kind is MacroActionKind.MAKE_ROOM:
        return True
    if kind is MacroActionKind.TO_DESIRED_VELOCITY:
        return abs(ego.v - desire.v_des) > params.v_tol
    raise ValueError(f"no initiation condition for {kind}")


def terminated(
    kind: MacroActionKind,
    world: WorldState,
    agent: int,
    desire: AgentDesire,
    target: Optional[int] = None,
    rng: Optional[random.Random] = None,
    params: MacroParams = MacroParams(),
) -> bool:
    ego = world.vehicle(agent)
    if kind is MacroActionKind.OVERTAKE:
        if target is None:
            raise ValueError("overtake termination requires the recorded target")
        try:
            other = world.vehicle(target)
        except KeyError:
            return True
        clearance = ego.length + params.clearance
        if ego.v >= 0.0:
            return ego.x > other.x + clearance
        return ego.x < other.x - clearance
    if kind is MacroActionKind.MERGE_IN:
        return ego.lane == desire.l_des
    if kind is MacroActionKind.MAKE_ROOM:
        if rng is None:
            raise ValueError("make-room termination is stochastic and needs an rng")
        return rng.random() < params.make_room_beta
    if kind is MacroActionKind.TO_DESIRED_VELOCITY:
        return abs(ego.v - desire.v_des) <= params.v_tol
    raise ValueError(f"no termination condition for {kind}")


def available_macros(
    world: WorldState,
    agent: int,
    desire: AgentDesire,
    road: RoadGeometry,
    params: MacroParams = MacroParams(),
) -> tuple[MacroActionKind, ...]:
    """Macro-actions whose initiation holds; make-room keeps it non-empty."""
    return tuple(
        k for k in MACROS if initiation(k, world, agent, desire, road, params)
    )
