import math

import pytest

from curvetwin import units
from curvetwin.control import (PHASE_ORDER, ControlError, ControlParams, Phase, SteeringMemory,
                               drive_phase, plan_phases, steer_from_pose)
from curvetwin.geometry import CurveSpec, build_road, generate_route


def test_phase_plan_follows_transitions(road, route):
    plan = plan_phases(road, route)
    assert tuple(p for p, _, _ in plan.intervals) == PHASE_ORDER
    assert plan.bounds(Phase.CURVE_ENTRY) == (road.entry_runout_start, road.entry_runoff_end)
    assert plan.bounds(Phase.FULL_SUPERELEVATION) == (road.entry_runoff_end, road.exit_runoff_start)
    assert plan.bounds(Phase.CURVE_EXIT) == (road.exit_runoff_start, road.exit_runout_end)
    assert plan.phase_at(0.0) is Phase.NORMAL_DRIVING
    assert plan.phase_at(road.pc_station) is Phase.CURVE_ENTRY  # 20 % of the runoff lies past the PC
    assert plan.phase_at((road.pc_station + road.pt_station) / 2) is Phase.FULL_SUPERELEVATION
    assert plan.phase_at(road.end_station) is Phase.POST_CURVE_ACCELERATION


def test_flat_curve_collapses_entry_and_exit():
    road = build_road(CurveSpec(superelevation_rate=0.0, normal_crown_slope=0.0))
    plan = plan_phases(road, generate_route(road))
    s, e = plan.bounds(Phase.CURVE_ENTRY)
    assert s == e == road.pc_station
    assert plan.bounds(Phase.FULL_SUPERELEVATION) == (road.pc_station, road.pt_station)


def test_drive_phase_examples():
    p = ControlParams()
    assert drive_phase(50.0, Phase.NORMAL_DRIVING, 0.0, 55, 50, p) == (1.0, 0.0)
    assert drive_phase(56.9, Phase.NORMAL_DRIVING, 0.0, 55, 50, p) == (0.0, 0.0)
    t, b = drive_phase(58.0, Phase.NORMAL_DRIVING, 0.0, 55, 50, p)
    assert t == 0.0 and b == pytest.approx(0.2)
    assert drive_phase(55.0, Phase.CURVE_ENTRY, 1.20, 55, 50, p) == (0.0, 0.0)
    assert drive_phase(55.0, Phase.CURVE_ENTRY, 1.22, 55, 50, p) == (0.0, 1.0)
    assert drive_phase(50.5, Phase.FULL_SUPERELEVATION, 9.0, 55, 50, p) == (0.0, 0.0)
    assert drive_phase(49.0, Phase.FULL_SUPERELEVATION, 9.0, 55, 50, p) == (0.1, 0.0)
    assert drive_phase(80.0, Phase.CURVE_EXIT, 0.0, 55, 50, p) == (0.1, 0.0)
    assert drive_phase(80.0, Phase.POST_CURVE_ACCELERATION, 0.0, 55, 50, p) == (0.0, 0.0)


def test_control_params_round_trip_and_validation():
    p = ControlParams(steering_law="aim", reaction_delay=0.9)
    back = ControlParams.from_dict(p.to_dict())
    for k, v in vars(p).items():
        assert getattr(back, k) == pytest.approx(v) if isinstance(v, float) else getattr(back, k) == v
    with pytest.raises(ControlError):
        ControlParams(steering_law="telepathy")
    with pytest.raises(ControlError):
        ControlParams(max_steer_angle=0.0)
    with pytest.raises(ControlError):
        ControlParams.from_dict({"bogus": 1})


def _straight_route():
    road = build_road(CurveSpec())
    return road, generate_route(road)


@pytest.mark.parametrize("law", ["track", "segment", "aim", "preview"])
def test_on_route_on_tangent_means_zero_steer(law):
    road, route = _straight_route()
    params = ControlParams(steering_law=law)
    x, y, _ = road.to_world(20.0, route.path_offset)
    mem = SteeringMemory()
    for _ in range(50):
        mem = steer_from_pose(x, y, 1.0, 0.0, 20.0, 0.0, route, params, mem, 0.002, 2.5, 2.8)
    assert abs(mem.angle) < 1e-9


def test_track_law_steers_back_toward_route():
    road, route = _straight_route()
    params = ControlParams()
    x, y, _ = road.to_world(20.0, route.path_offset + 0.5)  # 0.5 m left of the route
    mem = steer_from_pose(x, y, 1.0, 0.0, 20.0, 0.0, route, params, SteeringMemory(), 0.002, 2.5, 2.8)
    assert mem.angle < 0.0  # steer right


def test_steering_relaxes_at_damping_rate():
    road, route = _straight_route()
    params = ControlParams(steering_law="segment", steering_damping_rate=10.0)
    x, y, _ = road.to_world(20.0, route.path_offset)
    mem = SteeringMemory(angle=0.2)
    mem = steer_from_pose(x, y, 1.0, 0.0, 20.0, 0.0, route, params, mem, 0.01, 2.5, 2.8)
    assert mem.angle == pytest.approx(0.2 * math.exp(-0.1))


def test_target_index_advances_past_threshold():
    road, route = _straight_route()
    params = ControlParams()
    x, y, _ = road.to_world(50.0, route.path_offset)
    mem = steer_from_pose(x, y, 1.0, 0.0, 20.0, 0.0, route, params, SteeringMemory(), 0.002, 2.5, 2.8)
    front = 50.0 + 2.5
    nearest = route.stations[mem.index]
    assert nearest - front >= params.waypoint_threshold_distance - 1e-9
    assert route.stations[mem.index - 1] - front < params.waypoint_threshold_distance


def test_past_last_waypoint_target_is_zero():
    road, route = _straight_route()
    x, y, _ = road.to_world(route.stations[-1] + 5.0, route.path_offset)
    hx, hy = math.cos(road.sweep_angle), math.sin(road.sweep_angle)
    mem = SteeringMemory(angle=0.1)
    for _ in range(2000):
        mem = steer_from_pose(x, y, hx, hy, 20.0, 0.0, route, ControlParams(), mem, 0.002, 2.5, 2.8)
    assert abs(mem.angle) < 1e-9
    assert mem.index == len(route) - 1


def test_route_must_cover_transitions(road):
    short = generate_route(road)
    cut = type(short)(short.waypoints[20:], short.stations[20:], short.lane, short.centerline_offset,
                      short.spacing, short.path_offset)
    with pytest.raises(ControlError):
        plan_phases(road, cut)


def test_units_in_from_dict():
    p = ControlParams.from_dict({"waypoint_threshold_distance_ft": 10.0, "max_steer_angle_deg": 30.0})
    assert p.waypoint_threshold_distance == pytest.approx(10 * units.FT)
    assert p.max_steer_angle == pytest.approx(math.radians(30))
