import csv
import io
import math

import pytest

from curvetwin import search, units
from curvetwin.search import (TRAJECTORY_COLUMNS, AASHTOFrictionTable, RunOutcome, SafetyCriteria,
                              SearchFault, SpeedSearchResult, Verdict, aashto_design_speed,
                              compare_report, find_max_safe_speed, load_aashto_table,
                              percent_deviation, simulate_run, write_trajectory_csv)
from curvetwin.tire import DRY


@pytest.fixture(scope="module")
def slow_run(sedan, road, route):
    return simulate_run(sedan, road, route, 20.0, 15.0, DRY)


def test_slow_run_is_safe(slow_run):
    assert slow_run.verdict is Verdict.SAFE
    # 15 mph on a 712 ft radius needs v^2/R = 0.021 g; transients stay small
    assert 0.01 < slow_run.peak_lateral_accel / units.G < 0.06
    assert units.m_to_ft(slow_run.peak_lateral_offset) < 1.0


def test_trajectory_log(slow_run, road):
    rows = slow_run.trajectory
    assert all(len(r) == len(TRAJECTORY_COLUMNS) for r in rows)
    times = [r[0] for r in rows]
    assert all(b > a for a, b in zip(times, times[1:]))
    assert times[1] - times[0] == pytest.approx(0.02)  # 50 Hz
    assert rows[-1][1] >= units.m_to_ft(road.exit_runout_end)
    phases = list(dict.fromkeys(r[TRAJECTORY_COLUMNS.index("phase")] for r in rows))
    assert phases == ["normal_driving", "curve_entry", "full_superelevation", "curve_exit",
                      "post_curve_acceleration"]
    buf = io.StringIO()
    write_trajectory_csv(slow_run, buf, ["h1"])
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# h1" and lines[1] == "# schema: trajectory/1"
    assert tuple(lines[2].split(",")) == TRAJECTORY_COLUMNS
    assert len(lines) == 3 + len(rows)


def test_far_beyond_the_friction_limit_is_unsafe(sedan, road, route):
    # flat-friction bound with peak 1.0 and e = 0.078 is about 112 mph
    out = simulate_run(sedan, road, route, 125.0, 120.0, DRY)
    assert not out.safe
    assert out.failure_station is not None
    assert road.entry_runout_start <= out.failure_station <= road.exit_runout_end


def test_curve_speed_above_base_rejected(sedan, road, route):
    with pytest.raises(ValueError):
        simulate_run(sedan, road, route, 40.0, 45.0, DRY)


def test_window_limits_judgement(sedan, road, route):
    full = simulate_run(sedan, road, route, 75.0, 70.0, DRY)
    assert full.verdict is Verdict.LANE_DEPARTURE
    # a window that closes before the curve cannot see that failure
    out = simulate_run(sedan, road, route, 75.0, 70.0, DRY, criteria=SafetyCriteria(window=(0.0, 10.0)))
    assert out.safe


def test_leaving_the_pavement_ends_any_run(sedan, road, route):
    out = simulate_run(sedan, road, route, 125.0, 120.0, DRY, criteria=SafetyCriteria(window=(0.0, 10.0)))
    assert out.verdict is Verdict.LANE_DEPARTURE
    assert "paved roadway" in out.detail


def test_safety_criteria_round_trip():
    c = SafetyCriteria(lane_margin=0.1, max_lateral_offset=0.6, window=(10.0, 500.0))
    back = SafetyCriteria.from_dict(c.to_dict())
    assert back.lane_margin == pytest.approx(0.1)
    assert back.max_lateral_offset == pytest.approx(0.6)
    assert back.window == pytest.approx((10.0, 500.0))
    with pytest.raises(ValueError):
        SafetyCriteria.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        SafetyCriteria(window=(5.0, 1.0))


# --- search logic with a scripted simulator -----------------------------------

def _scripted(monkeypatch, unsafe):
    """Replace the simulator: speeds in `unsafe` fail with a lane departure."""
    def fake(vehicle, road, route, v_base, v_curve, condition, criteria, control, dt):
        assert v_base == v_curve + 5.0
        verdict = Verdict.LANE_DEPARTURE if unsafe(v_curve) else Verdict.SAFE
        return RunOutcome(verdict, v_base, v_curve)
    monkeypatch.setattr(search, "simulate_run", fake)


class _V:
    name = "probe"


def test_search_stops_at_first_failure(monkeypatch):
    _scripted(monkeypatch, lambda v: v >= 47)
    r = find_max_safe_speed(_V(), None, None, DRY, start=40, increment=1)
    assert r.max_safe_speed == 46 and r.first_failing_speed == 47
    assert r.failure_mode == "lane_departure"
    assert r.warning is None
    assert [v for v, _ in r.tested] == [40, 41, 42, 43, 44, 45, 46, 47, 48]


def test_search_reports_non_monotone_pattern(monkeypatch):
    _scripted(monkeypatch, lambda v: v == 47)
    r = find_max_safe_speed(_V(), None, None, DRY, start=40, increment=1, probe=2)
    assert r.max_safe_speed == 46  # not moved
    assert "non-monotone" in r.warning and "48" in r.warning


def test_search_refine(monkeypatch):
    _scripted(monkeypatch, lambda v: v >= 46.5)
    r = find_max_safe_speed(_V(), None, None, DRY, start=40, increment=1, refine=0.25)
    assert r.max_safe_speed == 46.25 and r.first_failing_speed == 46.5
    assert r.increment == 0.25


def test_search_faults(monkeypatch):
    _scripted(monkeypatch, lambda v: True)
    with pytest.raises(SearchFault, match="start speed"):
        find_max_safe_speed(_V(), None, None, DRY, start=40)
    _scripted(monkeypatch, lambda v: False)
    with pytest.raises(SearchFault, match="ceiling"):
        find_max_safe_speed(_V(), None, None, DRY, start=40, increment=10, ceiling=100)


# --- AASHTO -----------------------------------------------------------------------

def test_aashto_constant_f_closed_form():
    r = aashto_design_speed(500.0, 0.0, AASHTOFrictionTable.constant(0.15))
    assert r.speed == math.sqrt(15 * 500 * 0.15)
    assert round(r.speed, 2) == 33.54
    assert r.rounded == 30


def test_aashto_study_curve():
    r = aashto_design_speed(712.0, 0.078)
    # value frozen from an independent 0.01 mph scan (see the acceptance suite)
    assert r.speed == pytest.approx(48.57, abs=0.02)
    assert r.rounded == 45
    assert r.rounded % 5 == 0


@pytest.mark.parametrize("e", [-0.01, 0.12, 0.2])
def test_aashto_rejects_out_of_range_e(e):
    with pytest.raises(ValueError):
        aashto_design_speed(712.0, e)


def test_friction_table():
    t = load_aashto_table()
    assert t.f_max(15) == 0.32 and t.f_max(80) == 0.08
    assert t.f_max(47.5) == pytest.approx(0.145)
    assert t.f_max(5) == 0.32 and t.f_max(95) == 0.08  # held flat beyond the ends
    assert "AASHTO" in t.source
    with pytest.raises(ValueError):
        AASHTOFrictionTable(((10, 0.2), (20, 0.3)))
    with pytest.raises(ValueError):
        AASHTOFrictionTable(((20, 0.2), (10, 0.1)))


def test_compare_report():
    aashto = aashto_design_speed(712.0, 0.078)
    a = SpeedSearchResult("sedan", "dry", 63.0, 1.0, aashto.speed, 60.0, 64.0, "lane_departure")
    b = SpeedSearchResult("suv", "wet", 43.0, 1.0, aashto.speed, None, 44.0, "lane_departure")
    rep = compare_report([a, b], aashto)
    assert len(rep) == 2
    row = rep.rows[0]
    assert row["deviation_simulated_pct"] == pytest.approx(5.0)
    assert row["deviation_aashto_pct"] == pytest.approx(round((aashto.speed - 60) / 60 * 100, 2))
    assert rep.rows[1]["deviation_simulated_pct"] is None
    buf = io.StringIO()
    rep.write_csv(buf, ["h"])
    rows = list(csv.DictReader(l for l in buf.getvalue().splitlines() if not l.startswith("#")))
    assert rows[1]["deviation_simulated_pct"] == ""
    assert rows[0]["aashto_design_rounded_mph"] == "45"
    assert percent_deviation(None, 50) is None
