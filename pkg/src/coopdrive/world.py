"""Multi-lane road model: vehicle kinematics, quintic primitive trajectories,
joint-action transitions and collision checking.

All transitions are deterministic pure functions; world snapshots are immutable
and safe to share between concurrently running searches.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache
from typing import Iterable, NamedTuple, Sequence


class PrimitiveAction(str, Enum):
    """The five one-step maneuvers. Values double as plan-notation symbols.

    The str mixin gives members the C-level string hash, which matters because
    primitives key the per-node statistics dictionaries in the search.
    """

    ACCELERATE = "+"
    DECELERATE = "-"
    DO_NOTHING = "0"
    LANE_LEFT = "L"
    LANE_RIGHT = "R"

    @property
    def symbol(self) -> str:
        return self.value


PRIMITIVES: tuple[PrimitiveAction, ...] = tuple(PrimitiveAction)
PRIMITIVE_INDEX = {a: i for i, a in enumerate(PRIMITIVES)}

# Default vehicle footprint (unpublished; overridable per vehicle in configs).
DEFAULT_LENGTH = 4.5
DEFAULT_WIDTH = 2.0


@dataclass(frozen=True, slots=True)
class RoadGeometry:
    """Straight multi-lane road. Lane index increases to the left (+y)."""

    lane_count: int
    lane_width: float = 3.5
    length: float = 1000.0

    def __post_init__(self):
        if self.lane_count < 1:
            raise ValueError("lane_count must be >= 1")
        if self.lane_width <= 0 or self.length <= 0:
            raise ValueError("lane_width and length must be positive")


@dataclass(frozen=True, slots=True)
class WorldParams:
    """Shared transition parameters. dv is the velocity change per step;
    substep is the trajectory sampling resolution in seconds."""

    road: RoadGeometry
    step_length: float = 2.0
    dv: float = 2.5
    substep: float = 0.1


class VehicleState(NamedTuple):
    """Pose of one vehicle; (x, y) is the rear-axle midpoint.

    A NamedTuple rather than a dataclass: the search constructs tens of
    thousands of these per planning call.
    """

    id: int
    x: float
    y: float
    v: float
    lane: int
    length: float = DEFAULT_LENGTH
    width: float = DEFAULT_WIDTH


class WorldState(NamedTuple):
    epoch: int
    time: float
    vehicles: tuple[VehicleState, ...]

    def vehicle(self, agent: int) -> VehicleState:
        vehicles = self.vehicles
        # fast path: ids almost always equal positions
        if 0 <= agent < len(vehicles) and vehicles[agent].id == agent:
            return vehicles[agent]
        for veh in vehicles:
            if veh.id == agent:
                return veh
        raise KeyError(f"unknown agent id {agent}")


@dataclass(frozen=True, slots=True)
class TrajectorySegment:
    """Sampled poses (t, x, y, v) of one vehicle over a single step;
    t is absolute time, endpoints match the parent/child world states."""

    agent: int
    start_epoch: int
    poses: tuple[tuple[float, float, float, float], ...]


def lane_index(y: float, lane_width: float) -> int:
    return int(round(y / lane_width))


def quintic_profile(delta: float, u: float) -> float:
    """Minimum-jerk displacement fraction: delta * (10u^3 - 15u^4 + 6u^5).

    Zero first and second derivatives at both ends, so stitched step
    trajectories are velocity- and acceleration-continuous.
    """
    if u < 0.0 or u > 1.0:
        raise ValueError(f"normalized time u={u} outside [0, 1]")
    return delta * (u * u * u * (10.0 + u * (-15.0 + 6.0 * u)))


def _profile_integral(u: float) -> float:
    # int_0^u 10w^3 - 15w^4 + 6w^5 dw = 2.5u^4 - 3u^5 + u^6
    return u * u * u * u * (2.5 + u * (-3.0 + u))


@lru_cache(maxsize=None)
def _sample_grid(step_length: float, substep: float):
    """(t, u, p(u), int p) rows at fixed sub-step resolution over one step."""
    n = max(1, round(step_length / substep))
    rows = []
    for k in range(n + 1):
        u = k / n
        rows.append((u * step_length, u, quintic_profile(1.0, u), _profile_integral(u)))
    return tuple(rows)


def _action_deltas(veh: VehicleState, action: PrimitiveAction, params: WorldParams):
    """(dv, dy) applied over the step. Oncoming traffic (v < 0) accelerates
    by increasing |v|."""
    direction = 1.0 if veh.v >= 0.0 else -1.0
    if action is PrimitiveAction.ACCELERATE:
        return direction * params.dv, 0.0
    if action is PrimitiveAction.DECELERATE:
        return -direction * params.dv, 0.0
    if action is PrimitiveAction.LANE_LEFT:
        return 0.0, params.road.lane_width
    if action is PrimitiveAction.LANE_RIGHT:
        return 0.0, -params.road.lane_width
    return 0.0, 0.0


def step(
    world: WorldState,
    joint: Sequence[PrimitiveAction],
    params: WorldParams,
) -> tuple[WorldState, list[TrajectorySegment]]:
    """Advance every vehicle by its primitive action over one step.

    `joint` is ordered like `world.vehicles`. Lane changes beyond the road
    edge are contract violations (callers must filter with
    feasible_primitives) and raise ValueError.
    """
    if len(joint) != len(world.vehicles):
        raise ValueError("joint action must give exactly one action per agent")
    grid = _sample_grid(params.step_length, params.substep)
    lane_width = params.road.lane_width
    max_lane = params.road.lane_count - 1
    step_len = params.step_length
    new_vehicles = []
    segments = []
    for veh, action in zip(world.vehicles, joint):
        if action is PrimitiveAction.LANE_LEFT and veh.lane >= max_lane:
            raise ValueError(f"agent {veh.id}: lane change left beyond road edge")
        if action is PrimitiveAction.LANE_RIGHT and veh.lane <= 0:
            raise ValueError(f"agent {veh.id}: lane change right beyond road edge")
        dv, dy = _action_deltas(veh, action, params)
        poses = tuple(
            (
                world.time + t,
                veh.x + veh.v * t + dv * step_len * ip,
                veh.y + dy * p,
                veh.v + dv * p,
            )
            for t, _u, p, ip in grid
        )
        _t, x1, y1, v1 = poses[-1]
        new_vehicles.append(
            VehicleState(veh.id, x1, y1, v1, lane_index(y1, lane_width), veh.length, veh.width)
        )
        segments.append(TrajectorySegment(veh.id, world.epoch, poses))
    next_world = WorldState(world.epoch + 1, world.time + step_len, tuple(new_vehicles))
    return next_world, segments


def colliding_agents(
    segments: Iterable[TrajectorySegment],
    dims: dict[int, tuple[float, float]],
) -> frozenset[int]:
    """Agents whose rectangular footprints overlap at any common sample."""
    segs = list(segments)
    hit: set[int] = set()
    for i in range(len(segs)):
        si = segs[i]
        li, wi = dims[si.agent]
        for j in range(i + 1, len(segs)):
            sj = segs[j]
            lj, wj = dims[sj.agent]
            lc = 0.5 * (li + lj)
            wc = 0.5 * (wi + wj)
            for (_, xi, yi, _), (_, xj, yj, _) in zip(si.poses, sj.poses):
                if abs(xi - xj) < lc and abs(yi - yj) < wc:
                    hit.add(si.agent)
                    hit.add(sj.agent)
                    break
    return frozenset(hit)


def collision_check(
    segments: Iterable[TrajectorySegment],
    dims: dict[int, tuple[float, float]],
) -> bool:
    """True iff any two footprints overlap at a common sub-step sample."""
    return bool(colliding_agents(segments, dims))


def feasible_primitives(
    world: WorldState, agent: int, params: WorldParams
) -> frozenset[PrimitiveAction]:
    """Primitives that keep the agent on the road and non-reversing.
    Never empty: DO_NOTHING is always feasible."""
    veh = world.vehicle(agent)
    out = {PrimitiveAction.ACCELERATE, PrimitiveAction.DO_NOTHING}
    if abs(veh.v) >= params.dv:
        out.add(PrimitiveAction.DECELERATE)
    if veh.lane < params.road.lane_count - 1:
        out.add(PrimitiveAction.LANE_LEFT)
    if veh.lane > 0:
        out.add(PrimitiveAction.LANE_RIGHT)
    return frozenset(out)


def action_endpoint(
    veh: VehicleState, action: PrimitiveAction, params: WorldParams
) -> tuple[float, float, float]:
    """(x, y, v) of the vehicle after executing one primitive for a step."""
    dv, dy = _action_deltas(veh, action, params)
    t = params.step_length
    return veh.x + veh.v * t + dv * t * 0.5, veh.y + dy, veh.v + dv


def pair_collides(
    veh_i: VehicleState,
    act_i: PrimitiveAction,
    veh_j: VehicleState,
    act_j: PrimitiveAction,
    params: WorldParams,
    substep: float = 0.1,
) -> bool:
    """True iff the two footprints overlap at any sample while both vehicles
    execute one primitive each over a single step."""
    grid = _sample_grid(params.step_length, substep)
    step_len = params.step_length
    dvi, dyi = _action_deltas(veh_i, act_i, params)
    dvj, dyj = _action_deltas(veh_j, act_j, params)
    lc = 0.5 * (veh_i.length + veh_j.length)
    wc = 0.5 * (veh_i.width + veh_j.width)
    x0 = veh_i.x - veh_j.x
    v0 = veh_i.v - veh_j.v
    dv = dvi - dvj
    y0 = veh_i.y - veh_j.y
    dy = dyi - dyj
    for t, _u, p, ip in grid:
        if abs(x0 + v0 * t + dv * step_len * ip) < lc and abs(y0 + dy * p) < wc:
            return True
    return False


# ---------------------------------------------------------------------------
# Fast path used inside the search: closed-form endpoint update plus a
# conservative swept-interval collision test at a coarse sample resolution.
# ---------------------------------------------------------------------------

def advance(
    world: WorldState,
    joint: Sequence[PrimitiveAction],
    params: WorldParams,
    collision_substep: float = 0.5,
) -> tuple[WorldState, frozenset[int]]:
    """step() without materializing segments.

    Collision detection covers each sample interval with the bounding box of
    the relative displacement, so fast closing speeds cannot tunnel through a
    footprint even at coarse resolution (slightly conservative).
    """
    grid = _sample_grid(params.step_length, collision_substep)
    lane_width = params.road.lane_width
    step_len = params.step_length
    dv_mag = params.dv
    n = len(world.vehicles)
    deltas = []
    new_vehicles = []
    mk = VehicleState
    acc = PrimitiveAction.ACCELERATE
    dec = PrimitiveAction.DECELERATE
    left = PrimitiveAction.LANE_LEFT
    right = PrimitiveAction.LANE_RIGHT
    for veh, action in zip(world.vehicles, joint):
        v0 = veh.v
        dv = dy = 0.0
        if action is acc:
            dv = dv_mag if v0 >= 0.0 else -dv_mag
        elif action is dec:
            dv = -dv_mag if v0 >= 0.0 else dv_mag
        elif action is left:
            dy = lane_width
        elif action is right:
            dy = -lane_width
        deltas.append((veh.x, veh.y, v0, dv, dy))
        x1 = veh.x + v0 * step_len + dv * step_len * 0.5
        y1 = veh.y + dy
        new_vehicles.append(
            mk(veh.id, x1, y1, v0 + dv, int(round(y1 / lane_width)), veh.length, veh.width)
        )
    hit: set[int] = set()
    vehicles = world.vehicles
    for i in range(n):
        vi = vehicles[i]
        ai = deltas[i]
        ni = new_vehicles[i]
        for j in range(i + 1, n):
            vj = vehicles[j]
            nj = new_vehicles[j]
            lc = 0.5 * (vi.length + vj.length)
            wc = 0.5 * (vi.width + vj.width)
            # broad phase on endpoint envelopes
            dx0 = vi.x - vj.x
            dx1 = ni.x - nj.x
            if (dx0 > 0 and dx1 > 0 and min(dx0, dx1) >= lc) or (
                dx0 < 0 and dx1 < 0 and max(dx0, dx1) <= -lc
            ):
                continue
            dy0 = vi.y - vj.y
            dy1 = ni.y - nj.y
            if (dy0 > 0 and dy1 > 0 and min(dy0, dy1) >= wc) or (
                dy0 < 0 and dy1 < 0 and max(dy0, dy1) <= -wc
            ):
                continue
            aj = deltas[j]
            if _pair_sweep_hit(ai, aj, grid, step_len, lc, wc):
                hit.add(vi.id)
                hit.add(vj.id)
    next_world = WorldState(world.epoch + 1, world.time + step_len, tuple(new_vehicles))
    return next_world, frozenset(hit)


def _pair_sweep_hit(ai, aj, grid, step_len, lc, wc) -> bool:
    xi, yi, vi, dvi, dyi = ai
    xj, yj, vj, dvj, dyj = aj
    prev_dx = prev_dy = None
    for t, _u, p, ip in grid:
        dx = (xi - xj) + (vi - vj) * t + (dvi - dvj) * step_len * ip
        dy = (yi - yj) + (dyi - dyj) * p
        if prev_dx is not None:
            if min(prev_dx, dx) < lc and max(prev_dx, dx) > -lc:
                if min(prev_dy, dy) < wc and max(prev_dy, dy) > -wc:
                    return True
        prev_dx, prev_dy = dx, dy
    return False
