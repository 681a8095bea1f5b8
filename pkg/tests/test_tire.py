import math

import numpy as np
import pytest

from curvetwin.tire import (DRY, WET, Contact, FrictionCurve, WheelSpec, WheelState,
                            evaluate_friction, friction_slope, load_conditions, suspension_force,
                            tire_force, update_wheel)
from conftest import DATA


@pytest.mark.parametrize("surface,knots", [
    (DRY, [(0.0, 0.0), (0.40, 1.00), (0.80, 0.50), (2.0, 0.50)]),
    (WET, [(0.0, 0.0), (0.40, 0.65), (0.80, 0.35), (5.0, 0.35)]),
])
def test_table_knots(surface, knots):
    for slip, value in knots:
        assert evaluate_friction(surface.lateral, slip) == value
        assert evaluate_friction(surface.longitudinal, slip) == value


def test_stiffness_values():
    assert DRY.lateral.stiffness == 1.0
    assert WET.lateral.stiffness == 0.85


@pytest.mark.parametrize("curve", [DRY.lateral, WET.lateral])
def test_continuity_and_slope(curve):
    s = np.linspace(0.0, 1.2, 10_001)
    f = np.array([evaluate_friction(curve, x) for x in s])
    assert np.max(np.abs(np.diff(f))) < 1e-3  # no jumps at the knots
    # analytic slope agrees with central differences away from the knots
    for x in (0.1, 0.3, 0.5, 0.7, 1.0):
        h = 1e-6
        num = (evaluate_friction(curve, x + h) - evaluate_friction(curve, x - h)) / (2 * h)
        assert friction_slope(curve, x) == pytest.approx(num, abs=1e-5)
    assert friction_slope(curve, curve.extremum_slip) == pytest.approx(0.0, abs=1e-12)
    assert friction_slope(curve, 0.0) == pytest.approx(2 * curve.extremum_value / curve.extremum_slip)


def test_negative_slip_rejected():
    with pytest.raises(ValueError):
        evaluate_friction(DRY.lateral, -0.1)


@pytest.mark.parametrize("kwargs", [
    dict(extremum_slip=0.5, extremum_value=1, asymptote_slip=0.4, asymptote_value=0.5),
    dict(extremum_slip=0.4, extremum_value=0.4, asymptote_slip=0.8, asymptote_value=0.5),
    dict(extremum_slip=0.4, extremum_value=1, asymptote_slip=0.8, asymptote_value=0.5, stiffness=0),
])
def test_invalid_curve(kwargs):
    with pytest.raises(ValueError):
        FrictionCurve(**kwargs)


def test_surface_file_matches_builtins():
    conds = load_conditions(DATA / "surfaces.toml")
    assert conds["dry"] == DRY
    assert conds["wet"] == WET


def test_tire_force_signs_and_ellipse():
    n = 4000.0
    # pure lateral slip to the left -> force to the right
    fx, fy, kappa, alpha, _ = tire_force(DRY, n, 20.0 / 0.33, 0.33, 20.0, 2.0)
    assert kappa == pytest.approx(0.0, abs=1e-12)
    assert alpha == pytest.approx(0.1)
    assert fy < 0 and fy == pytest.approx(-n * evaluate_friction(DRY.lateral, 0.1))
    # combined slip never leaves the friction ellipse
    for spin in (0.0, 30.0, 80.0):
        for vlat in (-8.0, -1.0, 3.0, 9.0):
            fx, fy, *_ = tire_force(WET, n, spin, 0.33, 20.0, vlat)
            r = (fx / (n * WET.longitudinal.peak)) ** 2 + (fy / (n * WET.lateral.peak)) ** 2
            assert r <= 1.0 + 1e-12


def test_suspension_force_continuity():
    w = WheelSpec(0.33, 0.3, 30000.0, 3000.0, 2000.0, True, True, 1.5)
    assert suspension_force(w, 0.0, 1.0) == 0.0
    assert suspension_force(w, -0.01, 1.0) == 0.0
    assert suspension_force(w, 1e-9, 0.0) == pytest.approx(30000.0 * 1e-9)
    # rebound damping can't pull the wheel down
    assert suspension_force(w, 0.01, -10.0) == 0.0


def test_wheel_lift_zero_force():
    w = WheelSpec(0.33, 0.3, 30000.0, 3000.0, 2000.0, True, True, 1.5)
    state, force, torque = update_wheel(w, WheelState(50.0), None, (15.0, 0.0), 0.0, 0.0, 0.002, DRY)
    assert force == (0.0, 0.0, 0.0) and torque == 0.0
    assert not state.in_contact


def test_brake_stops_but_never_reverses():
    w = WheelSpec(0.33, 0.3, 30000.0, 3000.0, 5000.0, True, True, 1.5)
    contact = Contact(0.1, 0.0, 0.0)
    spin = 2.0
    for _ in range(200):
        state, _, _ = update_wheel(w, WheelState(spin), contact, (0.3, 0.0), 0.0, 5000.0, 0.002, DRY)
        spin = state.spin_rate
        assert spin >= 0.0
    assert spin == 0.0


def test_free_rolling_has_no_longitudinal_force():
    w = WheelSpec(0.33, 0.3, 30000.0, 3000.0, 5000.0, True, True, 1.5)
    state, (fx, fy, n), _ = update_wheel(w, WheelState(20.0 / 0.33), Contact(0.1, 0.0, 0.0),
                                         (20.0, 0.0), 0.0, 0.0, 0.002, DRY)
    assert n == pytest.approx(3000.0)
    assert abs(fx) < 1e-6 and fy == 0.0
    assert math.isclose(state.longitudinal_slip, 0.0, abs_tol=1e-9)
