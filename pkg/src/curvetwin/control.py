"""Autonomous driver: waypoint-pair steering and the five-phase speed controller."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields
from typing import NamedTuple

from . import units
from .dynamics import DriverCommand  # noqa: F401  (re-exported)


class ControlError(ValueError):
    pass


class Phase(enum.Enum):
    NORMAL_DRIVING = "normal_driving"
    CURVE_ENTRY = "curve_entry"
    FULL_SUPERELEVATION = "full_superelevation"
    CURVE_EXIT = "curve_exit"
    POST_CURVE_ACCELERATION = "post_curve_acceleration"


PHASE_ORDER = tuple(Phase)
# speed each phase holds the vehicle to
PHASE_TARGET = {
    Phase.NORMAL_DRIVING: "v_base",
    Phase.CURVE_ENTRY: "v_curve",
    Phase.FULL_SUPERELEVATION: "v_curve",
    Phase.CURVE_EXIT: "v_base",
    Phase.POST_CURVE_ACCELERATION: "v_base",
}

STEERING_LAWS = ("preview", "track", "aim", "segment")


@dataclass(frozen=True)
class ControlParams:
    """Driver settings. Lengths in m, angles in rad, speed margins in mph."""

    waypoint_threshold_distance: float = units.ft_to_m(20.0)
    steering_damping_rate: float = 50.0  # 1/s
    max_steer_angle: float = math.radians(35.0)
    reaction_delay: float = 1.21  # s
    normal_brake_margin: float = 2.0  # mph
    curve_brake_margin: float = 1.0  # mph
    hold_throttle: float = 0.1
    brake_gain: float = 0.2  # brake command per mph above the braking threshold
    entry_brake: float = 1.0
    steering_law: str = "track"
    crosstrack_gain: float = 20.0  # 1/s, "track" law only
    crosstrack_integral_gain: float = 0.3  # rad/(m*s), "track" law only; 0 disables
    crosstrack_softening: float = 5.0  # m/s, "track" law only
    yaw_damping: float = 0.05  # s, "track" law only; 0 disables
    preview_time: float = 1.0  # s, "preview" law
    preview_min_distance: float = 5.0  # m, "preview" law
    preview_gain: float = 1.0  # rad of steer per rad of previewed error angle

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "steering_law":
                if value not in STEERING_LAWS:
                    raise ControlError(f"steering_law must be one of {STEERING_LAWS}")
            elif f.name in ("reaction_delay", "crosstrack_integral_gain", "yaw_damping", "preview_time"):
                if value < 0:
                    raise ControlError(f"{f.name} must not be negative")
            elif not value > 0:
                raise ControlError(f"{f.name} must be positive, got {value}")
        if not 0 < self.hold_throttle <= 1 or not 0 < self.entry_brake <= 1:
            raise ControlError("hold_throttle and entry_brake must lie in (0, 1]")

    @classmethod
    def from_dict(cls, data: dict) -> ControlParams:
        """Overrides from a config table (ft, deg, mph, s)."""
        conv = {
            "waypoint_threshold_distance_ft": ("waypoint_threshold_distance", units.ft_to_m),
            "steering_damping_rate_per_s": ("steering_damping_rate", float),
            "max_steer_angle_deg": ("max_steer_angle", math.radians),
            "reaction_delay_s": ("reaction_delay", float),
            "normal_brake_margin_mph": ("normal_brake_margin", float),
            "curve_brake_margin_mph": ("curve_brake_margin", float),
            "hold_throttle": ("hold_throttle", float),
            "brake_gain_per_mph": ("brake_gain", float),
            "entry_brake": ("entry_brake", float),
            "steering_law": ("steering_law", str),
            "crosstrack_gain_per_s": ("crosstrack_gain", float),
            "crosstrack_integral_gain": ("crosstrack_integral_gain", float),
            "crosstrack_softening_mph": ("crosstrack_softening", units.mph_to_ms),
            "yaw_damping_s": ("yaw_damping", float),
            "preview_time_s": ("preview_time", float),
            "preview_min_distance_ft": ("preview_min_distance", units.ft_to_m),
            "preview_gain": ("preview_gain", float),
        }
        unknown = set(data) - set(conv)
        if unknown:
            raise ControlError(f"unknown control keys {sorted(unknown)}")
        return cls(**{conv[k][0]: conv[k][1](v) for k, v in data.items()})

    def to_dict(self) -> dict:
        return {
            "waypoint_threshold_distance_ft": units.m_to_ft(self.waypoint_threshold_distance),
            "steering_damping_rate_per_s": self.steering_damping_rate,
            "max_steer_angle_deg": math.degrees(self.max_steer_angle),
            "reaction_delay_s": self.reaction_delay,
            "normal_brake_margin_mph": self.normal_brake_margin,
            "curve_brake_margin_mph": self.curve_brake_margin,
            "hold_throttle": self.hold_throttle,
            "brake_gain_per_mph": self.brake_gain,
            "entry_brake": self.entry_brake,
            "steering_law": self.steering_law,
            "crosstrack_gain_per_s": self.crosstrack_gain,
            "crosstrack_integral_gain": self.crosstrack_integral_gain,
            "crosstrack_softening_mph": units.ms_to_mph(self.crosstrack_softening),
            "yaw_damping_s": self.yaw_damping,
            "preview_time_s": self.preview_time,
            "preview_min_distance_ft": units.m_to_ft(self.preview_min_distance),
            "preview_gain": self.preview_gain,
        }


def drive_phase(speed, phase: Phase, elapsed_in_phase, v_base, v_curve,
                params: ControlParams = ControlParams()):
    """(throttle, brake) for one phase. Speeds in mph.

    Throttle levels and brake triggers:

    ====================  ======================  ==============================
    phase                 throttle                brake
    ====================  ======================  ==============================
    normal driving        1.0 if v < v_base       if v > v_base + 2 mph
    curve entry           0.0                     after the reaction delay,
                                                  while v > v_curve
    full superelevation   0.1 if v < v_curve      if v > v_curve + 1 mph
    curve exit            0.1                     never
    post-curve            1.0 if v < v_base       never
    ====================  ======================  ==============================

    Brake strength is proportional to the excess over the trigger speed
    (`brake_gain` per mph, clamped to 1) except in curve entry, which uses
    `entry_brake`.
    """
    if phase is Phase.NORMAL_DRIVING:
        excess = speed - (v_base + params.normal_brake_margin)
        return (1.0 if speed < v_base else 0.0), _proportional(excess, params)
    if phase is Phase.CURVE_ENTRY:
        braking = elapsed_in_phase > params.reaction_delay and speed > v_curve
        return 0.0, (params.entry_brake if braking else 0.0)
    if phase is Phase.FULL_SUPERELEVATION:
        excess = speed - (v_curve + params.curve_brake_margin)
        return (params.hold_throttle if speed < v_curve else 0.0), _proportional(excess, params)
    if phase is Phase.CURVE_EXIT:
        return params.hold_throttle, 0.0
    if phase is Phase.POST_CURVE_ACCELERATION:
        return (1.0 if speed < v_base else 0.0), 0.0
    raise ControlError(f"unknown phase {phase!r}")


def _proportional(excess, params):
    if excess <= 0.0:
        return 0.0
    return min(1.0, params.brake_gain * excess)


@dataclass(frozen=True)
class PhasePlan:
    """Contiguous [start, end) station intervals, one per phase, in driving order."""

    intervals: tuple[tuple[Phase, float, float], ...]

    def __post_init__(self):
        if tuple(p for p, _, _ in self.intervals) != PHASE_ORDER:
            raise ControlError("phase plan must list every phase once, in driving order")
        for (_, _, end), (_, start, _) in zip(self.intervals, self.intervals[1:]):
            if start != end:
                raise ControlError("phase intervals must be contiguous")
        if any(e < s for _, s, e in self.intervals):
            raise ControlError("phase interval ends before it starts")

    @property
    def start(self):
        return self.intervals[0][1]

    @property
    def end(self):
        return self.intervals[-1][2]

    def phase_at(self, station) -> Phase:
        for phase, _, end in self.intervals[:-1]:
            if station < end:
                return phase
        return self.intervals[-1][0]

    def bounds(self, phase: Phase):
        for p, s, e in self.intervals:
            if p is phase:
                return s, e
        raise KeyError(phase)


def plan_phases(road, route) -> PhasePlan:
    """Split the route at the superelevation transitions.

    Curve entry runs from the start of the entry runout to the end of the
    entry runoff, full superelevation until the exit runoff begins, and curve
    exit to the end of the exit runout. With no superelevation the three
    curve phases collapse onto the arc (entry and exit become empty).
    """
    start, end = route.stations[0], route.stations[-1]
    knots = road.profile_stations
    cuts = (knots[0], knots[2], knots[3], knots[5])
    if start > cuts[0] or end < cuts[-1]:
        raise ControlError("route does not cover the superelevation transitions")
    edges = (start, *cuts, end)
    return PhasePlan(tuple((phase, edges[i], edges[i + 1]) for i, phase in enumerate(PHASE_ORDER)))


def _wrap(angle):
    return (angle + math.pi) % (2 * math.pi) - math.pi


class SteeringMemory(NamedTuple):
    """What the steering controller carries between steps."""

    angle: float = 0.0  # current front-wheel angle, rad
    index: int = 0  # first waypoint of the target pair
    integral: float = 0.0  # time integral of the cross-track error, m*s


def steer(state, route, params: ControlParams, memory: SteeringMemory, dt, front_distance) -> SteeringMemory:
    """Advance the steering controller one step.

    The target pair is (waypoints[index], waypoints[index + 1]); the index
    moves on while its nearer waypoint is within the threshold distance of
    the vehicle front (or already behind it). The wheels relax toward the
    law's target angle at `steering_damping_rate`. Past the last pair the
    target angle is zero.

    Steering laws:

    ``segment``
        the heading of the pair's segment relative to the vehicle heading.
        Has no feedback on lateral position, so the vehicle drifts.
    ``track`` (default)
        the heading of the route segment beside the vehicle front relative
        to the vehicle heading, minus ``atan(crosstrack_gain * e / (|v| + softening))`` and
        minus ``crosstrack_integral_gain * integral(e dt)``, minus
        ``yaw_damping * (yaw_rate - v * curvature)``, where e is the signed
        distance of the vehicle front from the route (positive to the left), v
        the forward speed, softening `crosstrack_softening` and curvature
        that of the route at the front.
        The integral absorbs the steady bias from tire slip and bank; the
        yaw term damps the heading loop at speed. The
        target pair still decides how far along the route the controller is.
    ``aim``
        points the wheels at the pair's midpoint as seen from the vehicle
        front (pure pursuit); cuts curves by roughly lookahead^2 / (2 R).
    ``preview``
        cross-track error at a point ``max(preview_min_distance, preview_time * v)``
        ahead, corrected for the route's bend over that distance, plus the
        kinematic feedforward ``atan(wheelbase * curvature)``.
    """
    w, x, y, z = state.orientation
    hx = 1 - 2 * (y * y + z * z)  # body x axis in world
    hy = 2 * (x * y + w * z)
    px, py, _ = state.position
    return steer_from_pose(px, py, hx, hy, state.velocity[0], state.angular_velocity[2], route, params,
                           memory, dt, front_distance)


def steer_from_pose(px, py, hx, hy, speed, yaw_rate, route, params, memory, dt,
                    front_distance, wheelbase=0.0) -> SteeringMemory:
    """`steer` on a bare pose: CG position (px, py), body x axis (hx, hy) in
    world, forward speed (m/s) and yaw rate (rad/s)."""
    previous, index, integral = memory
    norm = math.hypot(hx, hy)
    cx, sx = hx / norm, hy / norm
    fx, fy = px + front_distance * cx, py + front_distance * sx

    wps = route.waypoints
    last = len(wps) - 1
    thr2 = params.waypoint_threshold_distance ** 2
    while index < last:
        dx, dy = wps[index][0] - fx, wps[index][1] - fy
        if dx * dx + dy * dy < thr2 or dx * cx + dy * sx < 0.0:
            index += 1
        else:
            break

    limit = params.max_steer_angle
    if index >= last:
        target = 0.0
    else:
        (ax, ay, _), (bx, by, _) = wps[index], wps[index + 1]
        heading = math.atan2(sx, cx)
        if params.steering_law == "preview":
            distance = max(params.preview_min_distance, params.preview_time * speed)
            e, _, curvature = _locate(wps, index, px + distance * cx, py + distance * sx)
            ki = params.crosstrack_integral_gain
            if ki > 0.0:
                e_cg, _, _ = _crosstrack(wps, index, px, py)
                integral += e_cg * dt
                bound = limit / ki
                integral = max(-bound, min(bound, integral))
            # a vehicle on the route heading along its tangent sees the
            # preview point distance^2 * curvature / 2 to the outside
            ahead = e + 0.5 * distance * distance * curvature
            target = (math.atan(wheelbase * curvature)
                      - params.preview_gain * ahead / distance
                      - ki * integral)
        elif params.steering_law == "track":
            e, direction, curvature = _crosstrack(wps, index, fx, fy)
            ki = params.crosstrack_integral_gain
            if ki > 0.0:
                integral += e * dt
                bound = limit / ki
                integral = max(-bound, min(bound, integral))
            target = (_wrap(direction - heading)
                      - math.atan(params.crosstrack_gain * e / (abs(speed) + params.crosstrack_softening))
                      - ki * integral
                      - params.yaw_damping * (yaw_rate - speed * curvature))
        else:
            if params.steering_law == "aim":
                direction = math.atan2(0.5 * (ay + by) - fy, 0.5 * (ax + bx) - fx)
            else:
                direction = math.atan2(by - ay, bx - ax)
            target = _wrap(direction - heading)
        target = max(-limit, min(limit, target))
    angle = previous + (target - previous) * (1.0 - math.exp(-params.steering_damping_rate * dt))
    return SteeringMemory(angle, index, integral)


def _crosstrack(wps, index, fx, fy):
    """Signed lateral distance (left positive) of (fx, fy) from the route
    segment it currently lies along (searched backward from `index`), that
    segment's heading, and the route curvature there (heading change to the
    next segment over the segment length)."""
    j = max(index, 1)
    while True:
        (ax, ay, _), (bx, by, _) = wps[j - 1], wps[j]
        dx, dy = bx - ax, by - ay
        if j == 1 or (fx - ax) * dx + (fy - ay) * dy >= 0.0:
            break
        j -= 1
    length = math.hypot(dx, dy)
    heading = math.atan2(dy, dx)
    curvature = 0.0
    if j + 1 < len(wps):
        cx, cy = wps[j + 1][0] - bx, wps[j + 1][1] - by
        curvature = _wrap(math.atan2(cy, cx) - heading) / (0.5 * (length + math.hypot(cx, cy)))
    return (dx * (fy - ay) - dy * (fx - ax)) / length, heading, curvature


def _locate(wps, start, x, y):
    """Signed lateral distance of (x, y) from the route segment it lies
    along (searched in both directions from waypoint `start`), the
    segment heading and the route curvature there."""
    last = len(wps) - 1
    j = min(max(start, 1), last)
    while j < last:
        (ax, ay, _), (bx, by, _) = wps[j - 1], wps[j]
        if (x - bx) * (bx - ax) + (y - by) * (by - ay) > 0.0:
            j += 1
        else:
            break
    return _crosstrack(wps, j, x, y)
