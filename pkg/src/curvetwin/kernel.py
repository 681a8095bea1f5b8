"""Compiled semi-implicit vehicle step for long simulation runs.

Same physics as `dynamics.step` (which stays the readable reference; the
test suite checks the two agree step for step), but on packed float arrays
so numba can compile it. Closed-loop runs spend nearly all their time here.

Packed state (17): x y z | qw qx qy qz | u v w | p q r | spin x4
Wheel report (4 x 8): compression, in_contact, normal, slip_long, slip_lat,
F_long, F_lat, station
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from . import units

STATE_SIZE = 17
WHEEL_REPORT = 8

# road parameter layout
_PC, _PT, _RAD, _SWEEP, _PTX, _PTY, _HALF, _CROWN, _KNOTS = 0, 1, 2, 3, 4, 5, 6, 7, 8
ROAD_SIZE = _KNOTS + 12

# vehicle parameter layout
_M, _IX, _IY, _IZ, _CDA, _RHO, _G, _IDLE, _RED, _FINAL, _EFF, _NDRIVEN = range(12)
# wheel parameter columns
_HX, _HY, _HZ, _WR, _REST, _K, _C, _BRAKE, _STEER, _DRIVEN, _INERTIA = range(11)

SLIP_EPS = 0.5


def pack_road(road):
    rp = np.zeros(ROAD_SIZE)
    rp[_PC], rp[_PT], rp[_RAD], rp[_SWEEP] = road.pc_station, road.pt_station, road.radius, road.sweep_angle
    rp[_PTX], rp[_PTY] = road._pt_point
    rp[_HALF] = road.half_width
    rp[_CROWN] = road.spec.normal_crown_slope
    rp[_KNOTS:_KNOTS + 6] = road.profile_stations
    rp[_KNOTS + 6:_KNOTS + 12] = road.profile_slopes
    return rp


def pack_friction(condition):
    out = []
    for c in (condition.longitudinal, condition.lateral):
        out += [c.extremum_slip, c.extremum_value, c.asymptote_slip, c.asymptote_value, c.stiffness]
    return np.array(out)


class PackedVehicle:
    """Vehicle parameters as arrays for the kernel."""

    def __init__(self, spec, g=units.G, air_density=1.225):
        tr, eng = spec.transmission, spec.engine
        self.vp = np.array([spec.mass, *spec.inertia, spec.aero_drag_coefficient_area, air_density, g,
                            eng.idle_rpm, eng.redline_rpm, tr.final_drive_ratio,
                            tr.driveline_efficiency, float(len(spec.driven))])
        self.wp = np.array([[*hp, w.radius, w.suspension_rest_length, w.spring_rate, w.damper_rate,
                             w.max_brake_torque, float(w.steerable), float(w.driven), w.rotational_inertia]
                            for w, hp in zip(spec.wheels, spec.hardpoints)])
        self.rpm = np.array([p[0] for p in eng.torque_curve])
        self.torque = np.array([p[1] for p in eng.torque_curve])
        self.gears = np.array(tr.gear_ratios)
        self.shifts = np.array(tr.shift_up_speeds)


def pack_state(state):
    return np.array([*state.position, *state.orientation, *state.velocity, *state.angular_velocity,
                     *(w.spin_rate for w in state.wheels)])


@njit(cache=True)
def _cross_slope(rp, station):
    k = _KNOTS
    if station <= rp[k]:
        return rp[k + 6], 0.0
    if station >= rp[k + 5]:
        return rp[k + 11], 0.0
    for i in range(5):
        s0 = rp[k + i]
        s1 = rp[k + i + 1]
        if station < s1:
            if s1 <= s0:
                return rp[k + 7 + i], 0.0
            g = (rp[k + 7 + i] - rp[k + 6 + i]) / (s1 - s0)
            return rp[k + 6 + i] + g * (station - s0), g
    return rp[k + 11], 0.0


@njit(cache=True)
def _project(rp, x, y):
    """Closest-piece projection onto the alignment, as RoadModel.to_road."""
    pc, pt, R, sweep = rp[_PC], rp[_PT], rp[_RAD], rp[_SWEEP]
    station, offset, heading = x, y, 0.0
    dist = abs(y) if x <= pc else math.hypot(x - pc, y)
    dy = R - y
    phi = math.atan2(x - pc, dy)
    rho = math.hypot(x - pc, dy)
    if 0.0 <= phi <= sweep:
        d = abs(R - rho)
        if d < dist:
            dist = d
            station, offset, heading = pc + R * phi, R - rho, phi
    c, s = math.cos(sweep), math.sin(sweep)
    rx, ry = x - rp[_PTX], y - rp[_PTY]
    along = rx * c + ry * s
    off = -rx * s + ry * c
    d = abs(off) if along >= 0.0 else math.hypot(rx, ry)
    if d < dist:
        station, offset, heading = pt + along, off, sweep
    return station, offset, heading


@njit(cache=True)
def road_query(rp, x, y, out):
    """Ground under world (x, y). Fills out[:6] = station, offset, z, nx, ny, nz.

    Returns False off the roadway.
    """
    pc, pt, R, sweep = rp[_PC], rp[_PT], rp[_RAD], rp[_SWEEP]
    station, offset, heading = _project(rp, x, y)
    if not abs(offset) <= rp[_HALF]:
        return False
    outer, grad = _cross_slope(rp, station)
    sigma = outer
    if offset > 0.0:
        inner = -rp[_CROWN]
        if inner > outer:
            sigma = inner
            grad = 0.0
    z = -sigma * offset
    dz_lat = -sigma
    dz_s = -grad * offset
    if pc < station < pt:
        dz_s *= R / (R - offset)
    c, s = math.cos(heading), math.sin(heading)
    gx = dz_s * c - dz_lat * s
    gy = dz_s * s + dz_lat * c
    norm = math.sqrt(gx * gx + gy * gy + 1.0)
    out[0] = station
    out[1] = offset
    out[2] = z
    out[3] = -gx / norm
    out[4] = -gy / norm
    out[5] = 1.0 / norm
    return True


@njit(cache=True)
def _friction(fp, base, slip):
    se, ev, sa, av = fp[base], fp[base + 1], fp[base + 2], fp[base + 3]
    if slip <= se:
        t = slip / se
        return ev * t * (2.0 - t), 2.0 * ev * (1.0 - t) / se
    if slip < sa:
        t = (slip - se) / (sa - se)
        return ev + (av - ev) * t * t * (3.0 - 2.0 * t), (av - ev) * 6.0 * t * (1.0 - t) / (sa - se)
    return av, 0.0


@njit(cache=True)
def _tire(fp, normal, spin, radius, v_long, v_lat):
    den = abs(v_long)
    if den < SLIP_EPS:
        den = SLIP_EPS
    kappa = (spin * radius - v_long) / den
    alpha = v_lat / den
    mux, dmux = _friction(fp, 0, abs(kappa))
    muy, _ = _friction(fp, 5, abs(alpha))
    fx = normal * mux * fp[4]
    fy = normal * muy * fp[9]
    if kappa < 0.0:
        fx = -fx
    if alpha > 0.0:
        fy = -fy
    dfx = normal * fp[4] * dmux * radius / den
    xmax = normal * fp[1] * fp[4]
    ymax = normal * fp[6] * fp[9]
    if xmax > 0.0:
        r2 = (fx / xmax) ** 2 + (fy / ymax) ** 2
        if r2 > 1.0:
            k = 1.0 / math.sqrt(r2)
            fx *= k
            fy *= k
            dfx *= k
    return fx, fy, kappa, alpha, dfx


@njit(cache=True)
def _rotation(s, R):
    w, x, y, z = s[3], s[4], s[5], s[6]
    R[0, 0] = 1 - 2 * (y * y + z * z)
    R[0, 1] = 2 * (x * y - w * z)
    R[0, 2] = 2 * (x * z + w * y)
    R[1, 0] = 2 * (x * y + w * z)
    R[1, 1] = 1 - 2 * (x * x + z * z)
    R[1, 2] = 2 * (y * z - w * x)
    R[2, 0] = 2 * (x * z - w * y)
    R[2, 1] = 2 * (y * z + w * x)
    R[2, 2] = 1 - 2 * (x * x + y * y)


@njit(cache=True)
def step_kernel(s, report, throttle, brake, steer, dt, hold, vp, wp, rpm_pts, torque_pts,
                gears, shifts, rp, fp):
    """Advance packed state `s` in place by one semi-implicit Euler step.

    Returns False if the new state is not finite (then `s` holds the bad values).
    """
    R = np.empty((3, 3))
    _rotation(s, R)
    u, v, w = s[7], s[8], s[9]
    p, q, r = s[10], s[11], s[12]

    # powertrain
    drive = 0.0
    n_driven = vp[_NDRIVEN]
    if throttle > 0.0 and n_driven > 0:
        speed = abs(u)
        gear = 0
        for i in range(shifts.shape[0]):
            if shifts[i] <= speed:
                gear = i + 1
        ratio = gears[gear] * vp[_FINAL]
        spin = 0.0
        for i in range(4):
            if wp[i, _DRIVEN] > 0.0:
                spin += s[13 + i]
        spin /= n_driven
        eng_rpm = abs(spin) * ratio * 60.0 / (2 * math.pi)
        eng_rpm = min(max(eng_rpm, vp[_IDLE]), vp[_RED])
        drive = min(throttle, 1.0) * np.interp(eng_rpm, rpm_pts, torque_pts) * ratio * vp[_EFF] / n_driven

    fx = fy = fz = mx = my = mz = 0.0
    q_out = np.empty(6)
    for i in range(4):
        hx, hy, hz = wp[i, _HX], wp[i, _HY], wp[i, _HZ]
        radius = wp[i, _WR]
        inertia = wp[i, _INERTIA]
        torque = drive if wp[i, _DRIVEN] > 0.0 else 0.0
        brake_torque = brake * wp[i, _BRAKE]
        omega = s[13 + i]
        normal = 0.0
        compression = 0.0
        in_contact = False
        wx = s[0] + R[0, 0] * hx + R[0, 1] * hy + R[0, 2] * hz
        wy = s[1] + R[1, 0] * hx + R[1, 1] * hy + R[1, 2] * hz
        wz = s[2] + R[2, 0] * hx + R[2, 1] * hy + R[2, 2] * hz
        n0 = n1 = n2 = 0.0
        t = 0.0
        if road_query(rp, wx, wy, q_out):
            nwx, nwy, nwz = q_out[3], q_out[4], q_out[5]
            n0 = R[0, 0] * nwx + R[1, 0] * nwy + R[2, 0] * nwz
            n1 = R[0, 1] * nwx + R[1, 1] * nwy + R[2, 1] * nwz
            n2 = R[0, 2] * nwx + R[1, 2] * nwy + R[2, 2] * nwz
            if n2 >= 0.2:
                t = (wz - q_out[2]) * nwz / n2
                compression = wp[i, _REST] + radius - t
                if compression > 0.0:
                    in_contact = True
        fl = ft = 0.0
        kappa = alpha = 0.0
        if in_contact:
            vhx = u + q * hz - r * hy
            vhy = v + r * hx - p * hz
            vhz = w + p * hy - q * hx
            rate = -(vhx * n0 + vhy * n1 + vhz * n2) / n2
            normal = wp[i, _K] * compression + wp[i, _C] * rate
            if normal < 0.0:
                normal = 0.0
        if normal > 0.0:
            ang = steer if wp[i, _STEER] > 0.0 else 0.0
            c, sn = math.cos(ang), math.sin(ang)
            d = c * n0 + sn * n1
            f0, f1, f2 = c - d * n0, sn - d * n1, -d * n2
            k = 1.0 / math.sqrt(f0 * f0 + f1 * f1 + f2 * f2)
            f0, f1, f2 = f0 * k, f1 * k, f2 * k
            l0 = n1 * f2 - n2 * f1
            l1 = n2 * f0 - n0 * f2
            l2 = n0 * f1 - n1 * f0
            px_, py_, pz_ = hx, hy, hz - t
            vcx = u + q * pz_ - r * py_
            vcy = v + r * px_ - p * pz_
            vcz = w + p * py_ - q * px_
            v_long = vcx * f0 + vcy * f1 + vcz * f2
            v_lat = vcx * l0 + vcy * l1 + vcz * l2
            fl, _, _, _, dfx = _tire(fp, normal, omega, radius, v_long, v_lat)
            if dfx < 0.0:
                dfx = 0.0
            i_eff = inertia + dt * radius * dfx
            free = omega + dt * (torque - fl * radius) / i_eff
        else:
            i_eff = inertia
            free = omega + dt * torque / inertia
        stop = dt * brake_torque / i_eff
        if abs(free) <= stop:
            omega = 0.0
        elif free > 0.0:
            omega = free - stop
        else:
            omega = free + stop
        s[13 + i] = omega
        if normal > 0.0:
            fl, ft, kappa, alpha, _ = _tire(fp, normal, omega, radius, v_long, v_lat)
            report[i, 7] = q_out[0]
            if hold:
                fl = ft = 0.0
            bx = normal * n0 + fl * f0 + ft * l0
            by = normal * n1 + fl * f1 + ft * l1
            bz = normal * n2 + fl * f2 + ft * l2
            fx += bx
            fy += by
            fz += bz
            mx += py_ * bz - pz_ * by
            my += pz_ * bx - px_ * bz
            mz += px_ * by - py_ * bx
        else:
            report[i, 7] = math.nan
        report[i, 0] = compression
        report[i, 1] = 1.0 if normal > 0.0 else 0.0
        report[i, 2] = normal
        report[i, 3] = kappa
        report[i, 4] = alpha
        report[i, 5] = fl
        report[i, 6] = ft

    m = vp[_M]
    mg = m * vp[_G]
    qw, qx, qy, qz = s[3], s[4], s[5], s[6]
    fx -= mg * 2 * (qx * qz - qw * qy)
    fy -= mg * 2 * (qy * qz + qw * qx)
    fz -= mg * (1 - 2 * (qx * qx + qy * qy))
    if vp[_CDA] != 0.0:
        kd = -0.5 * vp[_RHO] * vp[_CDA] * math.sqrt(u * u + v * v + w * w)
        fx += kd * u
        fy += kd * v
        fz += kd * w

    ix, iy, iz = vp[_IX], vp[_IY], vp[_IZ]
    au = fx / m - (q * w - r * v)
    av = fy / m - (r * u - p * w)
    aw = fz / m - (p * v - q * u)
    ap = (mx + (iy - iz) * q * r) / ix
    aq = (my + (iz - ix) * p * r) / iy
    ar = (mz + (ix - iy) * p * q) / iz
    u += au * dt
    v += av * dt
    w += aw * dt
    p += ap * dt
    q += aq * dt
    r += ar * dt
    s[0] += (R[0, 0] * u + R[0, 1] * v + R[0, 2] * w) * dt
    s[1] += (R[1, 0] * u + R[1, 1] * v + R[1, 2] * w) * dt
    s[2] += (R[2, 0] * u + R[2, 1] * v + R[2, 2] * w) * dt
    s[7], s[8], s[9] = u, v, w
    s[10], s[11], s[12] = p, q, r

    mag = math.sqrt(p * p + q * q + r * r)
    half = 0.5 * mag * dt
    if mag > 0.0:
        sh = math.sin(half) / mag
        dw, dx, dy, dz = math.cos(half), p * sh, q * sh, r * sh
    else:
        dw, dx, dy, dz = 1.0, 0.0, 0.0, 0.0
    nw = qw * dw - qx * dx - qy * dy - qz * dz
    nx = qw * dx + qx * dw + qy * dz - qz * dy
    ny = qw * dy - qx * dz + qy * dw + qz * dx
    nz = qw * dz + qx * dy - qy * dx + qz * dw
    nn = math.sqrt(nw * nw + nx * nx + ny * ny + nz * nz)
    s[3], s[4], s[5], s[6] = nw / nn, nx / nn, ny / nn, nz / nn

    for i in range(STATE_SIZE):
        if not math.isfinite(s[i]):
            return False
    return True


@njit(cache=True)
def _quat_from_euler(roll, pitch, yaw, s):
    cr, sr = math.cos(roll / 2), math.sin(roll / 2)
    cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
    cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
    s[3] = cr * cp * cy + sr * sp * sy
    s[4] = sr * cp * cy - cr * sp * sy
    s[5] = cr * sp * cy + sr * cp * sy
    s[6] = cr * cp * sy - sr * sp * cy


@njit(cache=True)
def settle_kernel(s, report, steps, dt, vp, wp, rpm_pts, torque_pts, gears, shifts, rp, fp):
    """Suspension relaxation with x, y and yaw held (see `dynamics.settle`)."""
    x0, y0 = s[0], s[1]
    R = np.empty((3, 3))
    _rotation(s, R)
    yaw0 = math.atan2(R[1, 0], R[0, 0])
    s[7] = s[8] = s[9] = 0.0
    for i in range(4):
        s[13 + i] = 0.0
    for _ in range(steps):
        if not step_kernel(s, report, 0.0, 0.0, 0.0, dt, True, vp, wp, rpm_pts, torque_pts,
                           gears, shifts, rp, fp):
            return False
        _rotation(s, R)
        pitch = -math.asin(max(-1.0, min(1.0, R[2, 0])))
        roll = math.atan2(R[2, 1], R[2, 2])
        s[0], s[1] = x0, y0
        _quat_from_euler(roll, pitch, yaw0, s)
        s[7] = s[8] = 0.0
        s[12] = 0.0
    return True


class Kernel:
    """Packed vehicle, road and surface, ready to step."""

    def __init__(self, spec, road, condition):
        self.spec = spec
        self.vehicle = PackedVehicle(spec)
        self.rp = pack_road(road)
        self.fp = pack_friction(condition)
        self.report = np.zeros((4, WHEEL_REPORT))

    def _args(self):
        pv = self.vehicle
        return pv.vp, pv.wp, pv.rpm, pv.torque, pv.gears, pv.shifts, self.rp, self.fp

    def step(self, s, throttle, brake, steer, dt, hold=False):
        return step_kernel(s, self.report, throttle, brake, steer, dt, hold, *self._args())

    def settle(self, s, dt, duration):
        return settle_kernel(s, self.report, int(round(duration / dt)), dt, *self._args())
