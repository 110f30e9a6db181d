"""Decentralized planning loop: every tree-search vehicle plans for itself
each epoch while modeling all others, the joint action executes on the true
world, and the cycle repeats until the desires are met or the epoch budget
runs out."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .actions import MacroActionKind, overtake_target
from .reward import cooperative_reward, ego_step_reward
from .scenarios import ScenarioConfig
from .search import DecoupledSearch, SearchDiagnostics, plan_return
from .world import (
    PrimitiveAction,
    TrajectorySegment,
    WorldState,
    action_endpoint,
    collision_check,
    colliding_agents,
    feasible_primitives,
    pair_collides,
    step,
)


@dataclass(slots=True)
class EpochRecord:
    epoch: int
    world: WorldState                      # state at the start of the epoch
    actions: tuple[PrimitiveAction, ...]
    macros: tuple[Optional[str], ...]      # active macro name per agent
    ego_rewards: tuple[float, ...]
    coop_rewards: tuple[float, ...]
    plans: dict[int, str]                  # principal plan per planning agent
    plan_joints: dict[int, list]
    segments: list[TrajectorySegment] = field(default_factory=list)


@dataclass(slots=True)
class EpisodeLog:
    config: ScenarioConfig
    seed: int
    epochs: list[EpochRecord]
    final_world: WorldState
    terminal_cause: str  # "max_epochs" | "collision" | "desires_satisfied"

    def collided(self) -> bool:
        return self.terminal_cause == "collision"


@dataclass(slots=True)
class DivergenceEvent:
    epoch: int
    agent: int
    planned: str
    executed: str


def _epoch_seed(base: int, epoch: int) -> int:
    """Search seed shared by every agent within an epoch.

    With full cooperation every planner optimizes the same welfare, so
    planners running on common random numbers grow identical trees and each
    agent executes its own marginal of one coherent joint plan — coordination
    without communication. Planners still run independently per agent."""
    return (base * 1_000_003 + epoch * 8_191) & 0x7FFFFFFF


# Emergency fallback preference when the search's own candidates are vetoed.
_FALLBACK_ORDER = (
    PrimitiveAction.DECELERATE,
    PrimitiveAction.DO_NOTHING,
    PrimitiveAction.LANE_RIGHT,
    PrimitiveAction.LANE_LEFT,
    PrimitiveAction.ACCELERATE,
)


def _headway_violation(
    xi: float, yi: float, vi: float, xj: float, yj: float, vj: float,
    lc: float, wc: float, wparams,
) -> bool:
    """True when two end-of-step states share a lane corridor without the
    rear vehicle being able to dissolve the approach.

    Same-direction traffic must keep the rear vehicle's relative braking
    distance; head-on traffic must keep enough clearance for a lane exit
    (three further steps, since the exit may first require clearing an
    adjacent blockage) because braking cannot resolve an oncoming conflict.
    """
    if abs(yi - yj) >= wc:
        return False
    if xi <= xj:
        rear_v, front_v, gap = vi, vj, xj - xi - lc
    else:
        rear_v, front_v, gap = vj, vi, xi - xj - lc
    if gap < 0.0:
        return True
    closing = rear_v - front_v
    if closing <= 0.0:
        return False
    if rear_v * front_v >= 0.0:
        a_max = wparams.dv / wparams.step_length
        return gap < closing * closing / (2.0 * a_max)
    return gap < closing * 3.0 * wparams.step_length


def safe_action(
    world: WorldState,
    agent: int,
    ranked: list,
    mobile: tuple,
    wparams,
    committed: Optional[dict] = None,
) -> tuple[PrimitiveAction, Optional[MacroActionKind]]:
    """Execution-time safety screen over the search's ranked root actions.

    Independent planners can pick mutually incompatible maneuvers in the same
    step (e.g. two simultaneous merges into one gap), which replanning alone
    cannot undo mid-step. The screen keeps the highest-ranked action that
    avoids overlap and keeps a dissolvable headway against every other
    vehicle's one-step moves: agents that already committed an action this
    step are pinned to it, remaining mobile agents contribute all their
    feasible moves, and scripted vehicles are predicted to hold course. If no
    action survives that worst case, uncommitted agents are assumed to hold
    course; if even that fails, overlap alone is screened; a doomed state
    falls back to braking.
    """
    vehicles = world.vehicles
    me = vehicles[agent]
    if committed is None:
        committed = {}
    feasible = feasible_primitives(world, agent, wparams)
    candidates = [(a, m) for a, m in ranked if a in feasible]
    listed = {a for a, _m in candidates}
    candidates += [
        (a, None) for a in _FALLBACK_ORDER if a in feasible and a not in listed
    ]
    hold = (PrimitiveAction.DO_NOTHING,)

    def clear(cand: PrimitiveAction, worst_case: bool, headway: bool) -> bool:
        xe, ye, ve = action_endpoint(me, cand, wparams)
        for j, other in enumerate(vehicles):
            if j == agent:
                continue
            if j in committed:
                moves = (committed[j],)
            elif worst_case and mobile[j]:
                moves = feasible_primitives(world, j, wparams)
            else:
                moves = hold
            lc = 0.5 * (me.length + other.length)
            wc = 0.5 * (me.width + other.width)
            for mv in moves:
                if pair_collides(me, cand, other, mv, wparams):
                    return False
                if headway:
                    xj, yj, vj = action_endpoint(other, mv, wparams)
                    if _headway_violation(xe, ye, ve, xj, yj, vj, lc, wc, wparams):
                        return False
        return True

    for worst_case, headway in ((True, True), (False, True), (False, False)):
        for cand, macro in candidates:
            if clear(cand, worst_case, headway):
                return cand, macro
    if PrimitiveAction.DECELERATE in feasible:
        return PrimitiveAction.DECELERATE, None
    return candidates[0] if candidates else (PrimitiveAction.DO_NOTHING, None)


def _desire_satisfied(world, agent, desire, config) -> bool:
    """At desired velocity and lane, with no slower lead left to deal with."""
    veh = world.vehicle(agent)
    mp = config.macro_params
    if abs(veh.v - desire.v_des) > mp.v_tol or veh.lane != desire.l_des:
        return False
    return overtake_target(world, agent, desire, mp) is None


def run_episode(
    config: ScenarioConfig, max_epochs: Optional[int] = None, seed: int = 0
) -> EpisodeLog:
    if max_epochs is None:
        max_epochs = config.max_epochs
    wparams = config.world_params()
    desires = config.desires()
    # scripted vehicles are predicted in-tree exactly as they behave
    # (DO_NOTHING holds their velocity); treating them as cooperative
    # participants makes planners bank on yields that never happen
    modeled = tuple(v.controller == "mcts" for v in config.vehicles)
    mobile = tuple(v.controller == "mcts" for v in config.vehicles)
    planning = [v.id for v in config.vehicles if v.controller == "mcts"]
    dims = {v.id: (v.length, v.width) for v in config.vehicles}
    world = config.initial_world()
    carried: dict[int, Optional[MacroActionKind]] = {i: None for i in planning}
    hierarchical = config.search.mode == "hierarchical"
    epochs: list[EpochRecord] = []
    satisfied_streak = 0
    cause = "max_epochs"
    for epoch in range(max_epochs):
        actions: list[PrimitiveAction] = []
        macros: list[Optional[str]] = []
        plans: dict[int, str] = {}
        plan_joints: dict[int, list] = {}
        committed: dict[int, PrimitiveAction] = {}
        for spec in config.vehicles:
            i = spec.id
            if spec.controller == "mcts":
                params = replace(config.search, seed=_epoch_seed(seed, epoch))
                search = DecoupledSearch(
                    world,
                    desires,
                    modeled,
                    wparams,
                    params,
                    ego=i,
                    weights=config.weights,
                    macro_params=config.macro_params,
                    root_macro=carried[i] if hierarchical else None,
                )
                result = search.run()
                act, macro = safe_action(
                    world, i, search.ranked_root_actions(), mobile, wparams, committed
                )
                committed[i] = act
                actions.append(act)
                macros.append(macro.value if macro else None)
                plans[i] = result.diagnostics.plans.get(i, "")
                plan_joints[i] = result.diagnostics.principal_joints
                carried[i] = macro if hierarchical else None
            else:
                # scripted vehicles hold their velocity (parked stay at 0)
                committed[i] = PrimitiveAction.DO_NOTHING
                actions.append(PrimitiveAction.DO_NOTHING)
                macros.append(None)
        joint = tuple(actions)
        next_world, segments = step(world, joint, wparams)
        hits = colliding_agents(segments, dims)
        egos = tuple(
            ego_step_reward(
                world.vehicles[i],
                next_world.vehicles[i],
                joint[i],
                i in hits,
                desires[i],
                config.weights,
            )
            for i in range(len(joint))
        )
        coops = tuple(
            cooperative_reward(i, egos, desires[i].cooperation)
            for i in range(len(joint))
        )
        epochs.append(
            EpochRecord(
                epoch, world, joint, tuple(macros), egos, coops, plans, plan_joints, segments
            )
        )
        world = next_world
        if hits:
            cause = "collision"
            break
        if all(_desire_satisfied(world, i, desires[i], config) for i in planning):
            satisfied_streak += 1
            if satisfied_streak >= 2:
                cause = "desires_satisfied"
                break
        else:
            satisfied_streak = 0
    return EpisodeLog(config, seed, epochs, world, cause)


def replan_consistency_check(log: EpisodeLog) -> list[DivergenceEvent]:
    """Epochs where an agent's executed action departed from the previous
    epoch's principal plan; the replanning mechanism behind robustness to
    non-cooperative drivers."""
    events: list[DivergenceEvent] = []
    for prev, cur in zip(log.epochs, log.epochs[1:]):
        for agent, joints in prev.plan_joints.items():
            if len(joints) < 2:
                continue
            planned = joints[1][agent]
            executed = cur.actions[agent]
            if planned is not executed:
                events.append(
                    DivergenceEvent(cur.epoch, agent, planned.symbol, executed.symbol)
                )
    return events
