"""Scenario definitions and JSON config parsing.

Built-ins cover the three benchmark setups: a three-vehicle overtake, a
double merge past parked vehicles, and a bottleneck with an oncoming
non-cooperative vehicle. Units are meters, meters/second and seconds.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

from .actions import AgentDesire, MacroParams
from .reward import RewardWeights
from .search import SearchParams
from .world import (
    DEFAULT_LENGTH,
    DEFAULT_WIDTH,
    RoadGeometry,
    VehicleState,
    WorldParams,
    WorldState,
)

CONTROLLER_KINDS = ("mcts", "constant", "parked")


class ConfigError(ValueError):
    """Invalid scenario config; message names the offending field."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True, slots=True)
class VehicleSpec:
    id: int
    controller: str
    x0: float
    v0: float
    lane0: int
    v_des: float
    lane_des: int
    cooperation: float = 1.0
    length: float = DEFAULT_LENGTH
    width: float = DEFAULT_WIDTH


@dataclass(frozen=True, slots=True)
class ScenarioConfig:
    name: str
    road: RoadGeometry
    vehicles: tuple[VehicleSpec, ...]
    step_length: float = 2.0
    dv: float = 2.5
    substep: float = 0.1
    weights: RewardWeights = field(default_factory=RewardWeights)
    search: SearchParams = field(default_factory=SearchParams)
    macro_params: MacroParams = field(default_factory=MacroParams)
    max_epochs: int = 20

    def world_params(self) -> WorldParams:
        return WorldParams(self.road, self.step_length, self.dv, self.substep)

    def desires(self) -> tuple[AgentDesire, ...]:
        return tuple(
            AgentDesire(v.v_des, v.lane_des, v.cooperation) for v in self.vehicles
        )

    def initial_world(self) -> WorldState:
        vehicles = tuple(
            VehicleState(
                v.id,
                v.x0,
                v.lane0 * self.road.lane_width,
                v.v0,
                v.lane0,
                v.length,
                v.width,
            )
            for v in self.vehicles
        )
        return WorldState(0, 0.0, vehicles)


def validate(config: ScenarioConfig) -> ScenarioConfig:
    road = config.road
    ids = [v.id for v in config.vehicles]
    if not config.vehicles:
        raise ConfigError("vehicles", "at least one vehicle is required")
    if ids != list(range(len(ids))):
        raise ConfigError("vehicles[].id", "ids must be 0..n-1 in order")
    for v in config.vehicles:
        prefix = f"vehicles[{v.id}]"
        if v.controller not in CONTROLLER_KINDS:
            raise ConfigError(f"{prefix}.controller", f"unknown kind {v.controller!r}")
        if not 0 <= v.lane0 < road.lane_count:
            raise ConfigError(f"{prefix}.lane0", "lane outside the road")
        if not 0 <= v.lane_des < road.lane_count:
            raise ConfigError(f"{prefix}.lane_des", "lane outside the road")
        if not 0.0 <= v.cooperation <= 1.0:
            raise ConfigError(f"{prefix}.cooperation", "must lie in [0, 1]")
        if v.controller == "parked" and v.v0 != 0.0:
            raise ConfigError(f"{prefix}.v0", "parked vehicles must have v0 = 0")
        if v.length <= 0 or v.width <= 0:
            raise ConfigError(f"{prefix}.length", "footprint must be positive")
    for i, a in enumerate(config.vehicles):
        for b in config.vehicles[i + 1 :]:
            if (
                abs(a.x0 - b.x0) < 0.5 * (a.length + b.length)
                and abs(a.lane0 - b.lane0) * road.lane_width
                < 0.5 * (a.width + b.width)
            ):
                raise ConfigError(
                    f"vehicles[{b.id}]", f"initial footprint overlaps vehicle {a.id}"
                )
    return config


# ---------------------------------------------------------------------------
# Built-in scenarios
# ---------------------------------------------------------------------------

def builtin(name: str, red_speed: Optional[float] = None) -> ScenarioConfig:
    """One of "overtake", "double_merge" or "bottleneck".

    `red_speed` sets the oncoming vehicle's constant speed magnitude in the
    bottleneck (5..17 m/s in the benchmark)."""
    if name == "overtake":
        vehicles = (
            VehicleSpec(0, "mcts", 5.0, 15.0, 0, 25.0, 0),
            VehicleSpec(1, "mcts", 25.0, 15.0, 0, 20.0, 0),
            VehicleSpec(2, "mcts", 45.0, 15.0, 0, 15.0, 0),
        )
        return validate(
            ScenarioConfig(
                name="overtake",
                road=RoadGeometry(lane_count=3, length=800.0),
                vehicles=vehicles,
                # benchmark-tuned: collision penalty softened so rollout
                # noise does not drown the desire signal, velocity terms
                # strengthened so passing beats trailing
                weights=RewardWeights(w_collision=-300.0, w_v=10.0, w_v_step=2.0),
                # heuristic rollouts keep simulated overtakes committed, so
                # mid-pass states are valued by completed passes instead of
                # random wandering; without them the planner regularly merges
                # back behind the slower leader or lingers in the passing lane
                # c_uct rescaled to the tuned reward magnitudes (shaping
                # swings span hundreds); the library default of 2 would make
                # tree selection effectively greedy here
                search=SearchParams(
                    iterations=2000, max_depth=20, domain_knowledge=True, c_uct=150.0
                ),
                max_epochs=20,
            )
        )
    if name == "double_merge":
        # Parked-vehicle coordinates are not published; these block the
        # outer lanes so both movers must share the center lane. The two
        # blocks are staggered so the movers hit their bottlenecks at
        # different times; a simultaneous symmetric conflict saturates
        # every plan with collisions and hides search-quality differences.
        vehicles = (
            VehicleSpec(0, "mcts", 5.0, 25.0, 0, 25.0, 0),
            VehicleSpec(1, "mcts", 5.0, 25.0, 2, 25.0, 2),
            VehicleSpec(2, "parked", 120.0, 0.0, 0, 0.0, 0),
            VehicleSpec(3, "parked", 135.0, 0.0, 0, 0.0, 0),
            VehicleSpec(4, "parked", 200.0, 0.0, 2, 0.0, 2),
            VehicleSpec(5, "parked", 215.0, 0.0, 2, 0.0, 2),
        )
        return validate(
            ScenarioConfig(
                name="double_merge",
                road=RoadGeometry(lane_count=3, length=1500.0),
                vehicles=vehicles,
                weights=RewardWeights(w_collision=-300.0),
                search=SearchParams(iterations=1000, max_depth=20),
                max_epochs=20,
            )
        )
    if name == "bottleneck":
        speed = 13.0 if red_speed is None else float(red_speed)
        if speed <= 0:
            raise ConfigError("red_speed", "must be a positive magnitude")
        vehicles = (
            VehicleSpec(0, "mcts", 5.0, 10.0, 0, 15.0, 0),
            VehicleSpec(1, "constant", 195.0, -speed, 1, -speed, 1),
            VehicleSpec(2, "parked", 100.0, 0.0, 0, 0.0, 0),
        )
        return validate(
            ScenarioConfig(
                name="bottleneck",
                road=RoadGeometry(lane_count=2, length=300.0),
                vehicles=vehicles,
                # benchmark-tuned like the overtake: random-rollout collision
                # noise otherwise drowns the pass-the-obstacle desire signal
                weights=RewardWeights(w_collision=-300.0, w_v=10.0, w_v_step=2.0),
                search=SearchParams(iterations=1000, max_depth=12),
                max_epochs=25,
            )
        )
    raise ConfigError("scenario", f"unknown scenario {name!r}")


BUILTIN_NAMES = ("overtake", "double_merge", "bottleneck")


# ---------------------------------------------------------------------------
# JSON round-trip
# ---------------------------------------------------------------------------

_ROAD_KEYS = {"lane_count", "lane_width", "length"}
_VEHICLE_KEYS = {
    "id",
    "controller",
    "x0",
    "v0",
    "lane0",
    "v_des",
    "lane_des",
    "cooperation",
    "length",
    "width",
}
_WEIGHT_KEYS = {
    "w_collision",
    "w_v",
    "w_lane",
    "w_v_step",
    "w_lanechange",
    "w_accel",
    "gamma",
}
_SEARCH_KEYS = {
    "iterations",
    "max_depth",
    "gamma",
    "epsilon",
    "c_uct",
    "final_rule",
    "mode",
    "flat",
    "domain_knowledge",
    "seed",
    "search_substep",
}
_MACRO_KEYS = {"lookahead", "clearance", "v_tol", "make_room_beta"}
_TOP_KEYS = {
    "name",
    "road",
    "vehicles",
    "step_length",
    "dv",
    "substep",
    "weights",
    "search",
    "macro_params",
    "max_epochs",
}


def _check_keys(obj: dict, allowed: set, where: str):
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(where, f"unknown keys {sorted(unknown)}")


def _section(raw: dict, key: str, allowed: set, cls, where: str):
    obj = raw.get(key, {})
    if not isinstance(obj, dict):
        raise ConfigError(where, "must be an object")
    _check_keys(obj, allowed, where)
    try:
        return cls(**obj)
    except (TypeError, ValueError) as exc:
        raise ConfigError(where, str(exc)) from exc


def parse(text: str) -> ScenarioConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<document>", f"malformed JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("<document>", "top level must be an object")
    _check_keys(raw, _TOP_KEYS, "<document>")
    if "road" not in raw:
        raise ConfigError("road", "missing required section")
    if "vehicles" not in raw or not isinstance(raw["vehicles"], list):
        raise ConfigError("vehicles", "missing required vehicle list")
    road = _section(raw, "road", _ROAD_KEYS, RoadGeometry, "road")
    vehicles = []
    for idx, vraw in enumerate(raw["vehicles"]):
        where = f"vehicles[{idx}]"
        if not isinstance(vraw, dict):
            raise ConfigError(where, "must be an object")
        _check_keys(vraw, _VEHICLE_KEYS, where)
        try:
            vehicles.append(VehicleSpec(**vraw))
        except TypeError as exc:
            raise ConfigError(where, str(exc)) from exc
    weights = _section(raw, "weights", _WEIGHT_KEYS, RewardWeights, "weights")
    search = _section(raw, "search", _SEARCH_KEYS, SearchParams, "search")
    macro_params = _section(raw, "macro_params", _MACRO_KEYS, MacroParams, "macro_params")
    config = ScenarioConfig(
        name=raw.get("name", "custom"),
        road=road,
        vehicles=tuple(vehicles),
        step_length=raw.get("step_length", 2.0),
        dv=raw.get("dv", 2.5),
        substep=raw.get("substep", 0.1),
        weights=weights,
        search=search,
        macro_params=macro_params,
        max_epochs=raw.get("max_epochs", 20),
    )
    return validate(config)


def serialize(config: ScenarioConfig) -> str:
    doc = {
        "name": config.name,
        "road": asdict(config.road),
        "vehicles": [asdict(v) for v in config.vehicles],
        "step_length": config.step_length,
        "dv": config.dv,
        "substep": config.substep,
        "weights": asdict(config.weights),
        "search": asdict(config.search),
        "macro_params": asdict(config.macro_params),
        "max_epochs": config.max_epochs,
    }
    return json.dumps(doc, indent=2)


def with_overrides(config: ScenarioConfig, **search_overrides) -> ScenarioConfig:
    """New config with SearchParams fields replaced."""
    return replace(config, search=replace(config.search, **search_overrides))
