import io
import math

import pytest

from curvetwin import units
from curvetwin.geometry import (CurveSpec, GeometryError, build_road, generate_route,
                                read_route_csv, sample_surface, write_route_csv)

FT = units.FT


def test_alignment_stations(road):
    assert road.pc_station == pytest.approx(300 * FT)
    assert road.pt_station == pytest.approx(1700 * FT)
    assert road.end_station == pytest.approx(1950 * FT)
    assert road.sweep_angle == pytest.approx(1400 / 712)


def test_auto_transition_lengths(road):
    # runoff = rotated width * e / gradient, runout = rotated width * |crown| / gradient
    assert road.runoff_length == pytest.approx(11 * 0.078 / 0.005 * FT)
    assert road.runout_length == pytest.approx(11 * 0.02 / 0.005 * FT)
    # 80 % of the runoff lies before the PC
    assert road.pc_station - road.entry_runout_start - road.runout_length == pytest.approx(
        0.8 * road.runoff_length)


def test_cross_slope_profile(road):
    assert road.cross_slope(0.0) == -0.02
    assert road.cross_slope(road.entry_runoff_end) == 0.078
    assert road.cross_slope(road.pc_station) == pytest.approx(0.0624, abs=1e-12)
    mid = (road.pc_station + road.pt_station) / 2
    assert road.cross_slope(mid) == 0.078
    # zero cross slope where the runout meets the runoff
    assert road.cross_slope(road.entry_runout_start + road.runout_length) == pytest.approx(0.0, abs=1e-12)
    # linear between knots
    a, b = road.entry_runout_start + road.runout_length, road.entry_runoff_end
    assert road.cross_slope((a + b) / 2) == pytest.approx(0.039)


def test_inner_half_keeps_crown_until_rotated(road):
    assert road.lateral_slope(0.0, 1.0) == pytest.approx(0.02)
    assert road.lateral_slope(0.0, -1.0) == pytest.approx(-0.02)
    assert road.lateral_slope(road.pc_station, 1.0) == pytest.approx(0.0624)


@pytest.mark.parametrize("station_ft,offset_ft", [(50, -3.0), (300, 2.0), (900, -7.5), (1650, 4.0), (1900, 0.0)])
def test_world_road_round_trip(road, station_ft, offset_ft):
    x, y, _ = road.to_world(station_ft * FT, offset_ft * FT)
    st, off = road.to_road(x, y)
    assert st == pytest.approx(station_ft * FT, abs=1e-9)
    assert off == pytest.approx(offset_ft * FT, abs=1e-9)


def test_round_trip_past_a_quarter_turn():
    # the departure tangent heads back behind the PC
    r = build_road(CurveSpec(radius=328.08, arc_length=900, superelevation_rate=0.0,
                             normal_crown_slope=0.0))
    assert r.sweep_angle > math.pi / 2
    for s_ft in (100, 600, 1250, 1400):
        x, y, _ = r.to_world(s_ft * FT, -3 * FT)
        st, off = r.to_road(x, y)
        assert st == pytest.approx(s_ft * FT, abs=1e-9)
        assert off == pytest.approx(-3 * FT, abs=1e-9)


def test_surface_off_roadway_is_none(road):
    assert sample_surface(road, station=100.0, offset=road.half_width + 0.01) is None
    s = sample_surface(road, station=100.0, offset=-1.0)
    assert s.elevation == pytest.approx(-road.lateral_slope(100.0, -1.0) * -1.0)
    assert math.hypot(*s.normal) == pytest.approx(1.0)


def test_route_offsets(road, route):
    assert route.stations[0] == 0.0
    assert route.path_offset == pytest.approx(-5.5 * FT + 1.25 * FT)
    for (x, y, _), st in zip(route.waypoints, route.stations):
        s2, off = road.to_road(x, y)
        assert off == pytest.approx(route.path_offset, abs=1e-9)
        assert s2 == pytest.approx(st, abs=1e-9)
    gaps = [math.dist(a[:2], b[:2]) for a, b in zip(route.waypoints, route.waypoints[1:])]
    assert max(gaps) - min(gaps) < 1e-4  # chords on the arc are a hair shorter


def test_route_csv_round_trip(road, route, tmp_path):
    buf = io.StringIO()
    write_route_csv(route, buf, ["test header"])
    text = buf.getvalue()
    assert text.startswith("# test header\n")
    rows = text.splitlines()[2:]
    assert {r.split(",")[-1] for r in rows} == {"1.25"}
    f = tmp_path / "route.csv"
    f.write_text(text)
    back = read_route_csv(f, road)
    # feet <-> metres costs at most an ulp or two
    assert back.stations == pytest.approx(route.stations, abs=1e-9)
    for a, b in zip(back.waypoints, route.waypoints):
        assert a == pytest.approx(b, abs=1e-9)
    assert back.path_offset == pytest.approx(route.path_offset, abs=1e-12)


def test_zero_offset_route(road):
    r = generate_route(road, offset=0.0)
    assert r.path_offset == pytest.approx(road.lane_center_offset("outer"))


@pytest.mark.parametrize("kwargs", [
    {"radius": 0}, {"superelevation_rate": 0.12}, {"lane_width": -1}, {"normal_crown_slope": 0.01},
    {"arc_length": 2300}, {"runoff_fraction_before_pc": 1.5},
])
def test_invalid_curve_spec(kwargs):
    with pytest.raises(GeometryError):
        CurveSpec(**kwargs)


def test_route_offset_must_stay_in_lane(road):
    with pytest.raises(GeometryError):
        generate_route(road, offset=6 * FT)
