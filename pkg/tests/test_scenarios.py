"""Scenario configs: validation, built-ins, JSON round-trip."""
import json
from dataclasses import replace

import pytest

from coopdrive.scenarios import (
    BUILTIN_NAMES,
    ConfigError,
    ScenarioConfig,
    VehicleSpec,
    builtin,
    parse,
    serialize,
    validate,
    with_overrides,
)
from coopdrive.world import RoadGeometry


def make_config(**kw):
    base = dict(
        name="t",
        road=RoadGeometry(lane_count=2, length=500.0),
        vehicles=(
            VehicleSpec(0, "mcts", 0.0, 10.0, 0, 15.0, 0),
            VehicleSpec(1, "mcts", 30.0, 10.0, 0, 15.0, 0),
        ),
    )
    base.update(kw)
    return ScenarioConfig(**base)


# -- validation ----------------------------------------------------------------

def test_validate_accepts_wellformed():
    assert validate(make_config()) is not None


def test_ids_must_be_dense_and_ordered():
    cfg = make_config(
        vehicles=(
            VehicleSpec(1, "mcts", 0.0, 10.0, 0, 15.0, 0),
            VehicleSpec(0, "mcts", 30.0, 10.0, 0, 15.0, 0),
        )
    )
    with pytest.raises(ConfigError, match="ids"):
        validate(cfg)


def test_empty_vehicle_list_rejected():
    with pytest.raises(ConfigError, match="vehicles"):
        validate(make_config(vehicles=()))


def test_unknown_controller_rejected():
    cfg = make_config(vehicles=(VehicleSpec(0, "teleport", 0.0, 10.0, 0, 15.0, 0),))
    with pytest.raises(ConfigError, match="controller"):
        validate(cfg)


def test_lane_outside_road_rejected():
    cfg = make_config(vehicles=(VehicleSpec(0, "mcts", 0.0, 10.0, 5, 15.0, 0),))
    with pytest.raises(ConfigError, match="lane0"):
        validate(cfg)


def test_moving_parked_vehicle_rejected():
    cfg = make_config(vehicles=(VehicleSpec(0, "parked", 0.0, 3.0, 0, 0.0, 0),))
    with pytest.raises(ConfigError, match="v0"):
        validate(cfg)


def test_initial_overlap_rejected():
    cfg = make_config(
        vehicles=(
            VehicleSpec(0, "mcts", 0.0, 10.0, 0, 15.0, 0),
            VehicleSpec(1, "mcts", 2.0, 10.0, 0, 15.0, 0),
        )
    )
    with pytest.raises(ConfigError, match="overlap"):
        validate(cfg)


# -- built-ins -----------------------------------------------------------------

def test_builtin_names_resolve():
    for name in BUILTIN_NAMES:
        cfg = builtin(name)
        assert cfg.name == name


def test_unknown_builtin():
    with pytest.raises(ConfigError):
        builtin("roundabout")


def test_overtake_builtin_layout():
    cfg = builtin("overtake")
    assert cfg.road.lane_count == 3
    assert [v.x0 for v in cfg.vehicles] == [5.0, 25.0, 45.0]
    assert [v.v0 for v in cfg.vehicles] == [15.0, 15.0, 15.0]
    assert [v.v_des for v in cfg.vehicles] == [25.0, 20.0, 15.0]
    assert all(v.controller == "mcts" for v in cfg.vehicles)
    assert cfg.search.iterations == 2000 and cfg.search.max_depth == 20
    assert all(v.cooperation == 1.0 for v in cfg.vehicles)
    assert cfg.weights.w_collision == -300.0  # benchmark-tuned weights
    assert cfg.weights.w_v == 10.0 and cfg.weights.w_v_step == 2.0


def test_double_merge_builtin_layout():
    cfg = builtin("double_merge")
    movers = [v for v in cfg.vehicles if v.controller == "mcts"]
    parked = [v for v in cfg.vehicles if v.controller == "parked"]
    assert len(movers) == 2 and len(parked) == 4
    assert {v.lane0 for v in movers} == {0, 2}
    assert cfg.search.iterations == 1000 and cfg.search.max_depth == 20
    # the lane-0 and lane-2 blocks are staggered so the movers reach their
    # bottlenecks at different times
    lane0_block = sorted(v.x0 for v in parked if v.lane0 == 0)
    lane2_block = sorted(v.x0 for v in parked if v.lane0 == 2)
    assert lane0_block == [120.0, 135.0]
    assert lane2_block == [200.0, 215.0]


def test_bottleneck_red_speed():
    cfg = builtin("bottleneck", red_speed=17.0)
    red = cfg.vehicles[1]
    assert red.controller == "constant"
    assert red.v0 == -17.0  # oncoming
    with pytest.raises(ConfigError):
        builtin("bottleneck", red_speed=-3.0)


def test_bottleneck_layout():
    cfg = builtin("bottleneck")
    assert cfg.road.lane_count == 2
    blue, red, green = cfg.vehicles
    assert blue.controller == "mcts" and blue.v_des == 15.0
    assert green.controller == "parked" and green.x0 == 100.0
    assert cfg.search.max_depth == 12


def test_initial_world_places_vehicles_on_lane_centers():
    cfg = builtin("overtake")
    w = cfg.initial_world()
    for spec, veh in zip(cfg.vehicles, w.vehicles):
        assert veh.x == spec.x0
        assert veh.y == spec.lane0 * cfg.road.lane_width
        assert veh.lane == spec.lane0


# -- JSON round-trip -----------------------------------------------------------

def test_serialize_parse_round_trip():
    for name in BUILTIN_NAMES:
        cfg = builtin(name)
        assert parse(serialize(cfg)) == cfg


def test_parse_rejects_unknown_keys():
    doc = json.loads(serialize(builtin("overtake")))
    doc["gravity"] = 9.81
    with pytest.raises(ConfigError, match="unknown keys"):
        parse(json.dumps(doc))
    doc = json.loads(serialize(builtin("overtake")))
    doc["search"]["temperature"] = 1.0
    with pytest.raises(ConfigError, match="unknown keys"):
        parse(json.dumps(doc))


def test_parse_rejects_malformed_json_and_missing_sections():
    with pytest.raises(ConfigError, match="malformed"):
        parse("{nope")
    with pytest.raises(ConfigError, match="road"):
        parse(json.dumps({"vehicles": []}))


def test_parse_propagates_field_validation():
    doc = json.loads(serialize(builtin("overtake")))
    doc["weights"]["gamma"] = 2.0
    with pytest.raises(ConfigError, match="weights"):
        parse(json.dumps(doc))


def test_with_overrides_only_touches_search():
    cfg = builtin("overtake")
    out = with_overrides(cfg, iterations=5, flat=True)
    assert out.search.iterations == 5 and out.search.flat
    assert out.vehicles == cfg.vehicles and out.weights == cfg.weights


def test_desires_match_vehicle_specs():
    cfg = builtin("overtake")
    cfg = replace(
        cfg, vehicles=tuple(replace(v, cooperation=0.5) for v in cfg.vehicles)
    )
    for d, v in zip(cfg.desires(), cfg.vehicles):
        assert (d.v_des, d.l_des, d.cooperation) == (v.v_des, v.lane_des, 0.5)
