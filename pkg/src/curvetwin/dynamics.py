"""Six-degree-of-freedom sprung-mass vehicle.

Body frame: x forward, y left, z up, origin at the center of gravity.
World frame: x, y horizontal, z up. Orientation is a unit quaternion
(body to world); roll, pitch and yaw are its Z-Y-X Euler angles, so positive
pitch lowers the nose and positive roll raises the left side. With those
conventions, gravity resolved in the body frame is

    m*g * (sin(pitch), -sin(roll)*cos(pitch), -cos(roll)*cos(pitch))

and the translational and rotational equations are the usual body-axis
Newton-Euler equations with the (qw - rv), (ru - pw), (pv - qu) transport
terms and the (I_y - I_z)qr style gyroscopic terms on principal axes.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

from . import units
from .config import ConfigError, load_toml
from .geometry import sample_surface
from .tire import Contact, WheelSpec, WheelState, suspension_force, tire_force, update_wheel

AIR_DENSITY = 1.225  # kg/m^3
DRIVETRAINS = ("FWD", "RWD", "AWD")
WHEEL_NAMES = ("FL", "FR", "RL", "RR")
INTEGRATORS = ("semi-implicit", "rk4")


class SimulationFault(RuntimeError):
    """Raised when the state stops being finite."""


@dataclass(frozen=True)
class EngineSpec:
    torque_curve: tuple[tuple[float, float], ...]  # (rpm, N*m)
    idle_rpm: float
    redline_rpm: float

    def __post_init__(self):
        rpm = [p[0] for p in self.torque_curve]
        if len(rpm) < 2 or any(b <= a for a, b in zip(rpm, rpm[1:])):
            raise ValueError("torque curve rpm points must be strictly increasing")
        if any(p[1] < 0 for p in self.torque_curve):
            raise ValueError("torque curve values must be non-negative")
        if not 0 < self.idle_rpm < self.redline_rpm:
            raise ValueError("need 0 < idle_rpm < redline_rpm")

    def torque(self, rpm: float) -> float:
        pts = self.torque_curve
        if rpm <= pts[0][0]:
            return pts[0][1]
        if rpm >= pts[-1][0]:
            return pts[-1][1]
        i = bisect.bisect_right([p[0] for p in pts], rpm) - 1
        (r0, t0), (r1, t1) = pts[i], pts[i + 1]
        return t0 + (t1 - t0) * (rpm - r0) / (r1 - r0)


@dataclass(frozen=True)
class TransmissionSpec:
    gear_ratios: tuple[float, ...]
    final_drive_ratio: float
    shift_up_speeds: tuple[float, ...]  # m/s; upshift out of gear i above entry i
    driveline_efficiency: float = 0.9

    def __post_init__(self):
        g = self.gear_ratios
        if not g or any(r <= 0 for r in g) or any(b >= a for a, b in zip(g, g[1:])):
            raise ValueError("gear ratios must be positive and decreasing")
        s = self.shift_up_speeds
        if len(s) != len(g) - 1 or any(b <= a for a, b in zip(s, s[1:])):
            raise ValueError("need one increasing shift speed per upshift")
        if not 0 < self.driveline_efficiency <= 1:
            raise ValueError("driveline_efficiency must lie in (0, 1]")

    def gear(self, speed: float) -> int:
        return bisect.bisect_right(self.shift_up_speeds, speed)


@dataclass(frozen=True)
class VehicleSpec:
    """Vehicle parameters, SI units. Build from a vehicle file with `load_vehicle`."""

    name: str
    mass: float
    wheelbase: float
    overall_length: float
    overall_width: float
    overall_height: float
    cg_height: float
    drivetrain: str
    engine: EngineSpec
    transmission: TransmissionSpec
    wheels: tuple[WheelSpec, WheelSpec, WheelSpec, WheelSpec]
    track_width: float | None = None
    cg_longitudinal_position: float = 0.5
    inertia: tuple[float, float, float] | None = None
    aero_drag_coefficient_area: float = 0.0
    description: str = ""
    hardpoints: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if not self.cg_height > 0:
            raise ValueError("cg_height must be positive")
        if not self.wheelbase < self.overall_length:
            raise ValueError("wheelbase must be shorter than the overall length")
        if self.drivetrain not in DRIVETRAINS:
            raise ValueError(f"drivetrain must be one of {DRIVETRAINS}, got {self.drivetrain!r}")
        if not 0 < self.cg_longitudinal_position < 1:
            raise ValueError("cg_longitudinal_position must lie strictly between 0 and 1")
        if self.track_width is None:
            object.__setattr__(self, "track_width", self.overall_width - 12 * units.INCH)
        if self.inertia is None:
            m, l, w, h = self.mass, self.overall_length, self.overall_width, self.overall_height
            object.__setattr__(self, "inertia", (m * (w * w + h * h) / 12,
                                                 m * (l * l + h * h) / 12,
                                                 m * (l * l + w * w) / 12))
        object.__setattr__(self, "hardpoints", self._layout())

    @property
    def front_axle(self):
        """Distance from the CG forward to the front axle."""
        return self.cg_longitudinal_position * self.wheelbase

    @property
    def rear_axle(self):
        return self.wheelbase - self.front_axle

    @property
    def front_overhang(self):
        return (self.overall_length - self.wheelbase) / 2

    def corner_loads(self, g=units.G):
        """Static normal load per corner on level ground (FL, FR, RL, RR)."""
        front = self.mass * g * self.rear_axle / self.wheelbase / 2
        rear = self.mass * g * self.front_axle / self.wheelbase / 2
        return (front, front, rear, rear)

    def _layout(self):
        # Hardpoints sit so the CG rests at cg_height with every spring at its static load.
        a, b, half = self.front_axle, self.rear_axle, self.track_width / 2
        xy = ((a, half), (a, -half), (-b, half), (-b, -half))
        out = []
        for (x, y), wheel, load in zip(xy, self.wheels, self.corner_loads()):
            static = load / wheel.spring_rate
            z = -self.cg_height + wheel.radius + wheel.suspension_rest_length - static
            out.append((x, y, z))
        return tuple(out)

    @property
    def driven(self):
        return tuple(i for i, w in enumerate(self.wheels) if w.driven)

    def with_cg_height(self, cg_height):
        return replace(self, cg_height=cg_height)


def default_wheels(mass, wheelbase, cg_longitudinal_position, drivetrain, radius, inertia,
                   rest_length=0.30, frequency=1.2, damping_ratio=0.4, max_brake_torque=None,
                   g=units.G):
    """Four wheels with springs tuned to a sprung natural frequency per corner.

    The default brake torque locks the wheels at 1 g of deceleration on a
    friction-1.0 surface.
    """
    front_mass = mass * (1 - cg_longitudinal_position) / 2
    rear_mass = mass * cg_longitudinal_position / 2
    if max_brake_torque is None:
        max_brake_torque = mass * g * radius / 4
    front_driven = drivetrain in ("FWD", "AWD")
    rear_driven = drivetrain in ("RWD", "AWD")
    wheels = []
    for corner_mass, steer, driven in ((front_mass, True, front_driven),
                                       (front_mass, True, front_driven),
                                       (rear_mass, False, rear_driven),
                                       (rear_mass, False, rear_driven)):
        k = corner_mass * (2 * math.pi * frequency) ** 2
        c = 2 * damping_ratio * math.sqrt(k * corner_mass)
        wheels.append(WheelSpec(radius, rest_length, k, c, max_brake_torque, steer, driven, inertia))
    return tuple(wheels)


class RigidState(NamedTuple):
    position: tuple[float, float, float]
    orientation: tuple[float, float, float, float]  # unit quaternion (w, x, y, z)
    velocity: tuple[float, float, float]  # body frame (u, v, w)
    angular_velocity: tuple[float, float, float]  # body frame (p, q, r)
    wheels: tuple[WheelState, WheelState, WheelState, WheelState]
    time: float = 0.0

    @property
    def rotation(self):
        return quat_to_matrix(self.orientation)

    @property
    def euler(self):
        """(roll, pitch, yaw) in radians."""
        return euler_angles(quat_to_matrix(self.orientation))

    @property
    def speed(self):
        return math.hypot(self.velocity[0], self.velocity[1])


class BodyForces(NamedTuple):
    force: tuple[float, float, float]
    moment: tuple[float, float, float]


class WheelOutput(NamedTuple):
    force: tuple[float, float, float]  # body frame
    point: tuple[float, float, float]  # application point, body frame


class DriverCommand(NamedTuple):
    throttle: float = 0.0
    brake: float = 0.0
    steer_angle: float = 0.0


# --- rotation helpers ----------------------------------------------------------

def quat_to_matrix(q):
    w, x, y, z = q
    return (
        (1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)),
        (2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)),
        (2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)),
    )


def quat_from_euler(roll, pitch, yaw):
    cr, sr = math.cos(roll / 2), math.sin(roll / 2)
    cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
    cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
    return (cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy)


def euler_angles(R):
    pitch = -math.asin(max(-1.0, min(1.0, R[2][0])))
    roll = math.atan2(R[2][1], R[2][2])
    yaw = math.atan2(R[1][0], R[0][0])
    return roll, pitch, yaw


def quat_integrate(q, omega, dt):
    """q * exp(omega*dt/2): rotate by body rates held over dt, then renormalize."""
    p, qq, r = omega
    mag = math.sqrt(p * p + qq * qq + r * r)
    half = 0.5 * mag * dt
    if mag > 0.0:
        s = math.sin(half) / mag
        dw, dx, dy, dz = math.cos(half), p * s, qq * s, r * s
    else:
        dw, dx, dy, dz = 1.0, 0.0, 0.0, 0.0
    w, x, y, z = q
    nw = w * dw - x * dx - y * dy - z * dz
    nx = w * dx + x * dw + y * dz - z * dy
    ny = w * dy - x * dz + y * dw + z * dx
    nz = w * dz + x * dy - y * dx + z * dw
    n = math.sqrt(nw * nw + nx * nx + ny * ny + nz * nz)
    return (nw / n, nx / n, ny / n, nz / n)


def orthonormality_defect(R):
    worst = 0.0
    for i in range(3):
        for j in range(3):
            dot = sum(R[k][i] * R[k][j] for k in range(3))
            worst = max(worst, abs(dot - (1.0 if i == j else 0.0)))
    return worst


def gravity_body(mass, roll, pitch, g=units.G):
    """Gravity force in the body frame from roll and pitch."""
    return (mass * g * math.sin(pitch),
            -mass * g * math.sin(roll) * math.cos(pitch),
            -mass * g * math.cos(roll) * math.cos(pitch))


# --- forces --------------------------------------------------------------------

def aggregate_forces(spec: VehicleSpec, state: RigidState, outputs, g=units.G,
                     air_density=AIR_DENSITY) -> BodyForces:
    """Sum wheel forces, gravity and drag into body-frame force and moment about the CG."""
    fx = fy = fz = mx = my = mz = 0.0
    for (f0, f1, f2), (r0, r1, r2) in outputs:
        fx += f0
        fy += f1
        fz += f2
        mx += r1 * f2 - r2 * f1
        my += r2 * f0 - r0 * f2
        mz += r0 * f1 - r1 * f0
    # third row of body->world rotation == world z axis seen from the body
    w, x, y, z = state.orientation
    mg = spec.mass * g
    fx -= mg * 2 * (x * z - w * y)
    fy -= mg * 2 * (y * z + w * x)
    fz -= mg * (1 - 2 * (x * x + y * y))
    cda = spec.aero_drag_coefficient_area
    if cda:
        u, v, ww = state.velocity
        k = -0.5 * air_density * cda * math.sqrt(u * u + v * v + ww * ww)
        fx += k * u
        fy += k * v
        fz += k * ww
    return BodyForces((fx, fy, fz), (mx, my, mz))


def body_accelerations(spec: VehicleSpec, velocity, omega, forces: BodyForces):
    """Right-hand sides of the six body-axis equations of motion."""
    u, v, w = velocity
    p, q, r = omega
    m = spec.mass
    ix, iy, iz = spec.inertia
    fx, fy, fz = forces.force
    mx, my, mz = forces.moment
    return (
        (fx / m - (q * w - r * v), fy / m - (r * u - p * w), fz / m - (p * v - q * u)),
        ((mx + (iy - iz) * q * r) / ix, (my + (iz - ix) * p * r) / iy, (mz + (ix - iy) * p * q) / iz),
    )


def powertrain(spec: VehicleSpec, state: RigidState, throttle: float):
    """Drive torque per wheel (FL, FR, RL, RR) for a throttle in [0, 1]."""
    driven = spec.driven
    if throttle <= 0.0 or not driven:
        return (0.0, 0.0, 0.0, 0.0)
    tr = spec.transmission
    gear = tr.gear(abs(state.velocity[0]))
    ratio = tr.gear_ratios[gear] * tr.final_drive_ratio
    spin = sum(state.wheels[i].spin_rate for i in driven) / len(driven)
    eng = spec.engine
    rpm = min(max(abs(spin) * ratio * 60.0 / (2 * math.pi), eng.idle_rpm), eng.redline_rpm)
    per_wheel = min(throttle, 1.0) * eng.torque(rpm) * ratio * tr.driveline_efficiency / len(driven)
    return tuple(per_wheel if i in driven else 0.0 for i in range(4))


# --- wheels --------------------------------------------------------------------

def _wheel_frame(n, steer):
    """Unit heading and lateral axes of a wheel in the ground plane (body frame)."""
    c, s = math.cos(steer), math.sin(steer)
    d = c * n[0] + s * n[1]
    fx, fy, fz = c - d * n[0], s - d * n[1], -d * n[2]
    k = 1.0 / math.sqrt(fx * fx + fy * fy + fz * fz)
    fx, fy, fz = fx * k, fy * k, fz * k
    return (fx, fy, fz), (n[1] * fz - n[2] * fy, n[2] * fx - n[0] * fz, n[0] * fy - n[1] * fx)


def _contact(spec, R, pos, vel, omega, hp, wheel, road):
    """Cast the suspension ray of one wheel. Returns (Contact, point, normal) or None."""
    hx = pos[0] + R[0][0] * hp[0] + R[0][1] * hp[1] + R[0][2] * hp[2]
    hy = pos[1] + R[1][0] * hp[0] + R[1][1] * hp[1] + R[1][2] * hp[2]
    hz = pos[2] + R[2][0] * hp[0] + R[2][1] * hp[1] + R[2][2] * hp[2]
    sample = sample_surface(road, hx, hy)
    if sample is None:
        return None
    nw = sample.normal
    # ground normal in the body frame
    n = (R[0][0] * nw[0] + R[1][0] * nw[1] + R[2][0] * nw[2],
         R[0][1] * nw[0] + R[1][1] * nw[1] + R[2][1] * nw[2],
         R[0][2] * nw[0] + R[1][2] * nw[1] + R[2][2] * nw[2])
    if n[2] < 0.2:
        return None
    t = (hz - sample.elevation) * nw[2] / n[2]
    compression = wheel.suspension_rest_length + wheel.radius - t
    if compression <= 0.0:
        return None
    p, q, r = omega
    vhx = vel[0] + q * hp[2] - r * hp[1]
    vhy = vel[1] + r * hp[0] - p * hp[2]
    vhz = vel[2] + p * hp[1] - q * hp[0]
    rate = -(vhx * n[0] + vhy * n[1] + vhz * n[2]) / n[2]
    point = (hp[0], hp[1], hp[2] - t)
    return Contact(compression, rate, sample.station), point, n


def wheel_outputs(spec: VehicleSpec, state: RigidState, command: DriverCommand, road,
                  condition, dt, drive=None, hold=False):
    """Update all four wheels on the pre-step pose.

    Returns the new wheel states and the body-frame force/point pairs.
    `hold` suppresses the planar tire forces (suspension settling).
    """
    R = quat_to_matrix(state.orientation)
    pos, vel, omega = state.position, state.velocity, state.angular_velocity
    p, q, r = omega
    if drive is None:
        drive = powertrain(spec, state, command.throttle)
    brake = command.brake
    new_wheels, outputs = [], []
    for i, (wheel, hp, ws) in enumerate(zip(spec.wheels, spec.hardpoints, state.wheels)):
        hit = _contact(spec, R, pos, vel, omega, hp, wheel, road)
        brake_torque = brake * wheel.max_brake_torque
        if hit is None:
            new, _, _ = update_wheel(wheel, ws, None, (0.0, 0.0), drive[i], brake_torque, dt, condition)
            new_wheels.append(new)
            continue
        contact, pt, n = hit
        fwd, lat = _wheel_frame(n, command.steer_angle if wheel.steerable else 0.0)
        vcx = vel[0] + q * pt[2] - r * pt[1]
        vcy = vel[1] + r * pt[0] - p * pt[2]
        vcz = vel[2] + p * pt[1] - q * pt[0]
        v_long = vcx * fwd[0] + vcy * fwd[1] + vcz * fwd[2]
        v_lat = vcx * lat[0] + vcy * lat[1] + vcz * lat[2]
        new, (fl, ft, fn), _ = update_wheel(wheel, ws, contact, (v_long, v_lat), drive[i],
                                            brake_torque, dt, condition)
        if hold:
            fl = ft = 0.0
        new_wheels.append(new)
        outputs.append(WheelOutput(
            (fn * n[0] + fl * fwd[0] + ft * lat[0],
             fn * n[1] + fl * fwd[1] + ft * lat[1],
             fn * n[2] + fl * fwd[2] + ft * lat[2]), pt))
    return tuple(new_wheels), outputs


# --- integration ---------------------------------------------------------------

def _check_finite(state: RigidState, previous: RigidState, command):
    vals = (*state.position, *state.orientation, *state.velocity, *state.angular_velocity,
            *(w.spin_rate for w in state.wheels))
    if not all(math.isfinite(v) for v in vals):
        raise SimulationFault(
            f"non-finite state at t={state.time:.4f}s\n  previous: {previous}\n"
            f"  command: {command}\n  result: {state}")


def step(spec: VehicleSpec, state: RigidState, command: DriverCommand, road, condition,
         dt: float, method="semi-implicit", hold=False) -> RigidState:
    """Advance the vehicle one fixed timestep.

    Semi-implicit Euler (default): wheels and suspension are evaluated on the
    pre-step pose, body velocities are updated from the resulting forces, and
    the pose is then advanced with the new velocities.
    """
    if method == "rk4":
        new = _step_rk4(spec, state, command, road, condition, dt)
    elif method == "semi-implicit":
        wheels, outputs = wheel_outputs(spec, state, command, road, condition, dt, hold=hold)
        forces = aggregate_forces(spec, state, outputs)
        (au, av, aw), (ap, aq, ar) = body_accelerations(spec, state.velocity,
                                                        state.angular_velocity, forces)
        u, v, w = state.velocity
        p, q, r = state.angular_velocity
        u, v, w = u + au * dt, v + av * dt, w + aw * dt
        p, q, r = p + ap * dt, q + aq * dt, r + ar * dt
        R = quat_to_matrix(state.orientation)
        x, y, z = state.position
        x += (R[0][0] * u + R[0][1] * v + R[0][2] * w) * dt
        y += (R[1][0] * u + R[1][1] * v + R[1][2] * w) * dt
        z += (R[2][0] * u + R[2][1] * v + R[2][2] * w) * dt
        orientation = quat_integrate(state.orientation, (p, q, r), dt)
        new = RigidState((x, y, z), orientation, (u, v, w), (p, q, r), wheels, state.time + dt)
    else:
        raise ValueError(f"unknown integrator {method!r}; expected one of {INTEGRATORS}")
    _check_finite(new, state, command)
    return new


def _derivative(spec, y, command, road, condition, drive):
    """Continuous-time derivative of the packed state (used by RK4)."""
    pos, quat, vel, omega, spins = y[0:3], y[3:7], y[7:10], y[10:13], y[13:17]
    wheels = tuple(WheelState(s) for s in spins)
    st = RigidState(tuple(pos), tuple(quat), tuple(vel), tuple(omega), wheels)
    R = quat_to_matrix(quat)
    outputs, dspin = [], []
    p, q, r = omega
    for i, (wheel, hp) in enumerate(zip(spec.wheels, spec.hardpoints)):
        brake = command.brake * wheel.max_brake_torque
        torque = drive[i] - math.copysign(brake, spins[i]) if spins[i] else drive[i]
        hit = _contact(spec, R, pos, vel, omega, hp, wheel, road)
        if hit is None:
            dspin.append(torque / wheel.rotational_inertia)
            continue
        contact, pt, n = hit
        normal = suspension_force(wheel, contact.compression, contact.compression_rate)
        fwd, lat = _wheel_frame(n, command.steer_angle if wheel.steerable else 0.0)
        vcx = vel[0] + q * pt[2] - r * pt[1]
        vcy = vel[1] + r * pt[0] - p * pt[2]
        vcz = vel[2] + p * pt[1] - q * pt[0]
        v_long = vcx * fwd[0] + vcy * fwd[1] + vcz * fwd[2]
        v_lat = vcx * lat[0] + vcy * lat[1] + vcz * lat[2]
        fl, ft = 0.0, 0.0
        if normal > 0.0:
            fl, ft, *_ = tire_force(condition, normal, spins[i], wheel.radius, v_long, v_lat)
        dspin.append((torque - fl * wheel.radius) / wheel.rotational_inertia)
        outputs.append(WheelOutput(
            tuple(normal * n[k] + fl * fwd[k] + ft * lat[k] for k in range(3)), pt))
    forces = aggregate_forces(spec, st, outputs)
    acc, alpha = body_accelerations(spec, vel, omega, forces)
    world_vel = [sum(R[i][k] * vel[k] for k in range(3)) for i in range(3)]
    w, x, yq, z = quat
    dq = (0.5 * (-x * p - yq * q - z * r),
          0.5 * (w * p + yq * r - z * q),
          0.5 * (w * q - x * r + z * p),
          0.5 * (w * r + x * q - yq * p))
    return [*world_vel, *dq, *acc, *alpha, *dspin]


def _step_rk4(spec, state, command, road, condition, dt):
    y0 = [*state.position, *state.orientation, *state.velocity, *state.angular_velocity,
          *(w.spin_rate for w in state.wheels)]
    drive = powertrain(spec, state, command.throttle)

    def f(y):
        return _derivative(spec, y, command, road, condition, drive)

    k1 = f(y0)
    k2 = f([a + 0.5 * dt * b for a, b in zip(y0, k1)])
    k3 = f([a + 0.5 * dt * b for a, b in zip(y0, k2)])
    k4 = f([a + dt * b for a, b in zip(y0, k3)])
    y = [a + dt / 6 * (b1 + 2 * b2 + 2 * b3 + b4) for a, b1, b2, b3, b4 in zip(y0, k1, k2, k3, k4)]
    qn = math.sqrt(sum(c * c for c in y[3:7]))
    quat = tuple(c / qn for c in y[3:7])
    wheels = tuple(ws._replace(spin_rate=s) for ws, s in zip(state.wheels, y[13:17]))
    return RigidState(tuple(y[0:3]), quat, tuple(y[7:10]), tuple(y[10:13]), wheels,
                      state.time + dt)


# --- initial state -------------------------------------------------------------

def place_on_road(spec: VehicleSpec, road, station, offset, heading=None, speed=0.0) -> RigidState:
    """Vehicle at rest pose on the road surface, aligned with the local bank."""
    x, y, _ = road.to_world(station, offset)
    sample = sample_surface(road, x, y)
    if sample is None:
        raise ValueError("start position is off the roadway")
    yaw = road.heading(station) if heading is None else heading
    roll = math.atan(-sample.cross_slope)
    z = sample.elevation + spec.cg_height / math.cos(roll)
    wheels = tuple(WheelState(speed / w.radius) for w in spec.wheels)
    return RigidState((x, y, z), quat_from_euler(roll, 0.0, yaw), (speed, 0.0, 0.0),
                      (0.0, 0.0, 0.0), wheels, 0.0)


def settle(spec: VehicleSpec, state: RigidState, road, condition, dt, duration=1.0) -> RigidState:
    """Let the suspension relax with the planar pose held fixed."""
    x0, y0, _ = state.position
    roll0, pitch0, yaw0 = state.euler
    rest = state._replace(velocity=(0.0, 0.0, 0.0),
                          wheels=tuple(w._replace(spin_rate=0.0) for w in state.wheels))
    for _ in range(int(round(duration / dt))):
        rest = step(spec, rest, DriverCommand(), road, condition, dt, hold=True)
        roll, pitch, _ = rest.euler
        _, _, w = rest.velocity
        p, q, _ = rest.angular_velocity
        rest = rest._replace(position=(x0, y0, rest.position[2]),
                             orientation=quat_from_euler(roll, pitch, yaw0),
                             velocity=(0.0, 0.0, w), angular_velocity=(p, q, 0.0))
    return rest._replace(time=0.0)


def release(spec: VehicleSpec, state: RigidState, speed: float) -> RigidState:
    """Set the vehicle rolling straight ahead at `speed` (m/s)."""
    wheels = tuple(ws._replace(spin_rate=speed / w.radius) for w, ws in zip(spec.wheels, state.wheels))
    u, v, w = state.velocity
    return state._replace(velocity=(speed, 0.0, w), wheels=wheels)


# --- vehicle files -------------------------------------------------------------

DRIVE_ALIASES = {"FWD": "FWD", "RWD": "RWD", "AWD": "AWD", "4WD": "AWD"}


def vehicle_from_dict(data: dict, source="vehicle") -> VehicleSpec:
    """Build a `VehicleSpec` from a vehicle file's contents (US customary units)."""
    try:
        mass = units.lb_to_kg(float(data["mass_lbs"]))
        wheelbase = float(data["wheelbase_in"]) * units.INCH
        drive = DRIVE_ALIASES.get(str(data["drive_type"]).upper())
        if drive is None:
            raise ConfigError(f"{source}: drive_type must be FWD, RWD, AWD or 4WD")
        cg_pos = float(data.get("cg_longitudinal_position", 0.5))
        eng = data["engine"]
        engine = EngineSpec(
            tuple((float(r), float(t) * units.LBFT)
                  for r, t in zip(eng["torque_curve_rpm"], eng["torque_curve_lbft"])),
            float(eng["idle_rpm"]), float(eng["redline_rpm"]))
        tr = data["transmission"]
        transmission = TransmissionSpec(
            tuple(float(g) for g in tr["gear_ratios"]), float(tr["final_drive_ratio"]),
            tuple(units.mph_to_ms(float(s)) for s in tr["shift_up_speeds_mph"]),
            float(tr.get("driveline_efficiency", 0.9)))
        wheel = data.get("wheel", {})
        susp = data.get("suspension", {})
        brake = data.get("brakes", {}).get("max_brake_torque_lbft")
        wheels = default_wheels(
            mass, wheelbase, cg_pos, drive,
            radius=float(wheel.get("radius_in", 13.0)) * units.INCH,
            inertia=float(wheel.get("rotational_inertia_kgm2", 1.5)),
            rest_length=float(susp.get("rest_length_in", 12.0)) * units.INCH,
            frequency=float(susp.get("frequency_hz", 1.2)),
            damping_ratio=float(susp.get("damping_ratio", 0.4)),
            max_brake_torque=None if brake is None else float(brake) * units.LBFT)
        inertia = data.get("inertia_kgm2")
        track = data.get("track_width_in")
        return VehicleSpec(
            name=str(data["name"]),
            mass=mass,
            wheelbase=wheelbase,
            overall_length=float(data["overall_length_in"]) * units.INCH,
            overall_width=float(data["overall_width_in"]) * units.INCH,
            overall_height=float(data["overall_height_in"]) * units.INCH,
            cg_height=float(data["cg_height_in"]) * units.INCH,
            drivetrain=drive,
            engine=engine,
            transmission=transmission,
            wheels=wheels,
            track_width=None if track is None else float(track) * units.INCH,
            cg_longitudinal_position=cg_pos,
            inertia=None if inertia is None else tuple(float(i) for i in inertia),
            aero_drag_coefficient_area=float(data.get("aero_drag_coefficient_area_m2", 0.0)),
            description=str(data.get("description", "")),
        )
    except KeyError as exc:
        raise ConfigError(f"{source}: missing required key {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_vehicle(path) -> VehicleSpec:
    return vehicle_from_dict(load_toml(path), source=str(path))
