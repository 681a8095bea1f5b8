"""Closed-loop curve runs, safety verdicts, maximum-safe-speed search, AASHTO benchmark."""

from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

from . import units
from .control import ControlParams, SteeringMemory, drive_phase, plan_phases, steer_from_pose
from .dynamics import WHEEL_NAMES, place_on_road, SimulationFault
from .kernel import Kernel, pack_state

log = logging.getLogger(__name__)

DT = 0.002
LOG_RATE_HZ = 50.0


class SearchFault(RuntimeError):
    pass


class Verdict(str, enum.Enum):
    SAFE = "safe"
    LANE_DEPARTURE = "lane_departure"
    ROLLOVER = "rollover"
    SPIN_OUT = "spin_out"
    STALL = "stall"


@dataclass(frozen=True)
class SafetyCriteria:
    """Failure thresholds, judged only inside the evaluation window.

    Lane departure: a corner of the vehicle's plan-view footprint lies
    beyond a lane edge line; `lane_margin` (m) moves those lines outward
    (negative tightens). `max_lateral_offset` (m), when set, also fails any
    run whose center of mass strays farther than that from the route.
    Leaving the paved roadway with any tire always counts as a departure.
    Rollover: both wheels of one side without load for longer than
    `wheel_lift_pair_duration` while the other side still touches, or roll
    beyond `max_roll`. Spin-out: heading error beyond `max_heading_error`.
    `window` is a (start, end) station range in m; None selects the entry
    runout start to the exit runout end.
    """

    lane_margin: float = 0.0
    max_lateral_offset: float | None = None
    wheel_lift_pair_duration: float = 0.2  # s
    max_roll: float = math.radians(30.0)
    max_heading_error: float = math.radians(45.0)
    stall_speed: float = units.mph_to_ms(2.0)
    window: tuple[float, float] | None = None

    def __post_init__(self):
        if not (self.wheel_lift_pair_duration > 0 and self.max_roll > 0
                and self.max_heading_error > 0 and self.stall_speed > 0):
            raise ValueError("safety thresholds must be positive")
        if self.max_lateral_offset is not None and not self.max_lateral_offset > 0:
            raise ValueError("max_lateral_offset must be positive")
        if self.window is not None:
            a, b = self.window
            if not a < b:
                raise ValueError("evaluation window must have start < end")
            object.__setattr__(self, "window", (float(a), float(b)))

    def evaluation_window(self, road) -> tuple[float, float]:
        if self.window is not None:
            return self.window
        return road.entry_runout_start, road.exit_runout_end

    @classmethod
    def from_dict(cls, data: dict) -> SafetyCriteria:
        conv = {
            "lane_margin_ft": ("lane_margin", units.ft_to_m),
            "max_lateral_offset_ft": ("max_lateral_offset", units.ft_to_m),
            "wheel_lift_pair_duration_s": ("wheel_lift_pair_duration", float),
            "max_roll_deg": ("max_roll", math.radians),
            "max_heading_error_deg": ("max_heading_error", math.radians),
            "stall_speed_mph": ("stall_speed", units.mph_to_ms),
            "window_ft": ("window", lambda w: tuple(units.ft_to_m(float(v)) for v in w)),
        }
        unknown = set(data) - set(conv)
        if unknown:
            raise ValueError(f"unknown safety keys {sorted(unknown)}")
        return cls(**{conv[k][0]: conv[k][1](v) for k, v in data.items()})

    def to_dict(self) -> dict:
        out = {
            "lane_margin_ft": units.m_to_ft(self.lane_margin),
            "wheel_lift_pair_duration_s": self.wheel_lift_pair_duration,
            "max_roll_deg": math.degrees(self.max_roll),
            "max_heading_error_deg": math.degrees(self.max_heading_error),
            "stall_speed_mph": units.ms_to_mph(self.stall_speed),
        }
        if self.max_lateral_offset is not None:
            out["max_lateral_offset_ft"] = units.m_to_ft(self.max_lateral_offset)
        if self.window is not None:
            out["window_ft"] = [units.m_to_ft(v) for v in self.window]
        return out


TRAJECTORY_SCHEMA = "trajectory/1"
TRAJECTORY_COLUMNS = (
    "t_s", "station_ft", "x_ft", "y_ft", "z_ft", "speed_mph",
    "u_fps", "v_fps", "w_fps", "p_radps", "q_radps", "r_radps",
    "roll_deg", "pitch_deg", "yaw_deg", "steer_deg", "throttle", "brake", "phase",
    *(f"normal_{n}_lbf" for n in WHEEL_NAMES),
    *(f"slip_long_{n}" for n in WHEEL_NAMES),
    *(f"slip_lat_{n}" for n in WHEEL_NAMES),
    "lateral_offset_ft",
)
_LBF = 4.4482216152605  # N per lbf


@dataclass
class RunOutcome:
    verdict: Verdict
    v_base: float  # mph
    v_curve: float  # mph
    peak_lateral_accel: float = 0.0  # m/s^2
    peak_roll: float = 0.0  # rad
    min_inside_normal_force: float = math.inf  # N
    peak_lateral_offset: float = 0.0  # m, from the route
    failure_time: float | None = None
    failure_station: float | None = None
    detail: str = ""
    trajectory: list = field(default_factory=list, repr=False)

    @property
    def safe(self):
        return self.verdict is Verdict.SAFE

    def summary(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "v_base_mph": self.v_base,
            "v_curve_mph": self.v_curve,
            "peak_lateral_accel_g": self.peak_lateral_accel / units.G,
            "peak_roll_deg": math.degrees(self.peak_roll),
            "min_inside_normal_force_lbf": (None if math.isinf(self.min_inside_normal_force)
                                            else self.min_inside_normal_force / _LBF),
            "peak_lateral_offset_ft": units.m_to_ft(self.peak_lateral_offset),
            "failure_time_s": self.failure_time,
            "failure_station_ft": (None if self.failure_station is None
                                   else units.m_to_ft(self.failure_station)),
            "detail": self.detail,
        }


def _wrap(a):
    return (a + math.pi) % (2 * math.pi) - math.pi


def simulate_run(vehicle, road, route, v_base, v_curve, condition,
                 criteria: SafetyCriteria = SafetyCriteria(),
                 control: ControlParams = ControlParams(),
                 dt=DT, settle_time=1.0, log_rate=LOG_RATE_HZ, full_rate=False) -> RunOutcome:
    """Drive the route once with base speed `v_base` and curve speed `v_curve` (mph).

    The vehicle settles for `settle_time` seconds at the route start, is
    released at `v_base`, and is driven until the last waypoint or the first
    safety violation inside the evaluation window (start of the entry runout
    to the end of the exit runout).
    """
    if v_curve > v_base:
        raise ValueError("v_curve must not exceed v_base")
    plan = plan_phases(road, route)
    window = criteria.evaluation_window(road)
    kern = Kernel(vehicle, road, condition)
    start_station = route.stations[0]
    s = pack_state(place_on_road(vehicle, road, start_station, route.path_offset,
                                 heading=road.heading(start_station)))
    if not kern.settle(s, dt, settle_time):
        raise SimulationFault("non-finite state while settling")
    speed0 = units.mph_to_ms(v_base)
    s[7] = speed0
    for i, w in enumerate(vehicle.wheels):
        s[13 + i] = speed0 / w.radius

    lane_lo, lane_hi = _lane_bounds(road, route)
    lane_lo -= criteria.lane_margin
    lane_hi += criteria.lane_margin
    front = vehicle.front_axle + vehicle.front_overhang
    rear = front - vehicle.overall_length
    half = vehicle.overall_width / 2
    footprint = ((front, half), (front, -half), (rear, half), (rear, -half))
    tires = tuple((hp[0], hp[1]) for hp in vehicle.hardpoints)
    end_station = route.stations[-1]
    report = kern.report
    log_every = 1 if full_rate else max(1, round(1.0 / (log_rate * dt)))
    max_time = 3.0 * (end_station - start_station) / max(units.mph_to_ms(v_curve), 1.0) + 10.0

    out = RunOutcome(Verdict.SAFE, v_base, v_curve)
    traj = out.trajectory
    memory = SteeringMemory()
    steer_angle = 0.0
    phase = None
    phase_start = 0.0
    lift_left = lift_right = 0.0
    t = 0.0
    n = 0
    throttle = brake = 0.0
    v_prev = s[8]
    while True:
        x, y = s[0], s[1]
        qw, qx, qy, qz = s[3], s[4], s[5], s[6]
        hx = 1 - 2 * (qy * qy + qz * qz)
        hy = 2 * (qx * qy + qw * qz)
        station, offset = road.to_road(x, y)
        if station >= end_station:
            break
        speed = math.hypot(s[7], s[8])
        current = plan.phase_at(station)
        if current is not phase:
            phase, phase_start = current, t
        throttle, brake = drive_phase(speed / units.MPH, phase, t - phase_start, v_base, v_curve, control)
        memory = steer_from_pose(x, y, hx, hy, s[7], s[12], route, control, memory, dt, front,
                                 vehicle.wheelbase)
        steer_angle = memory.angle

        if not kern.step(s, throttle, brake, steer_angle, dt):
            raise SimulationFault(f"non-finite state at t={t:.4f}s, station {station:.2f} m: {s.tolist()}")
        t += dt
        n += 1

        # wheel lift bookkeeping (FL, FR, RL, RR)
        left_up = report[0, 1] == 0.0 and report[2, 1] == 0.0
        right_up = report[1, 1] == 0.0 and report[3, 1] == 0.0
        lift_left = lift_left + dt if left_up and not right_up else 0.0
        lift_right = lift_right + dt if right_up and not left_up else 0.0
        lat_accel = (s[8] - v_prev) / dt + s[7] * s[12]
        v_prev = s[8]

        if n % log_every == 0:
            traj.append(_log_row(t, station, offset, route, s, steer_angle, throttle, brake, phase, report))

        if window[0] <= station <= window[1]:
            verdict, detail = _judge(s, station, offset, road, route, footprint, tires,
                                     lane_lo, lane_hi, lift_left, lift_right, criteria)
            roll = math.atan2(2 * (qy * qz + qw * qx), 1 - 2 * (qx * qx + qy * qy))
            out.peak_roll = max(out.peak_roll, abs(roll))
            out.peak_lateral_accel = max(out.peak_lateral_accel, abs(lat_accel))
            out.peak_lateral_offset = max(out.peak_lateral_offset, abs(offset - route.path_offset))
            out.min_inside_normal_force = min(out.min_inside_normal_force, report[0, 2], report[2, 2])
        else:
            # there is no ground beyond the pavement, so leaving it ends any run
            verdict, detail = _off_roadway(s, road, tires)
        if verdict is not None:
            out.verdict, out.detail = verdict, detail
            out.failure_time, out.failure_station = t, station
            break
        if speed < criteria.stall_speed or t > max_time:
            out.verdict = Verdict.STALL
            out.detail = f"speed {speed / units.MPH:.2f} mph at station {units.m_to_ft(station):.1f} ft"
            out.failure_time, out.failure_station = t, station
            break
    if not traj or traj[-1][0] != round(t, 6):
        traj.append(_log_row(t, station, offset, route, s, steer_angle, throttle, brake, phase, report))
    return out


def _lane_bounds(road, route):
    w = units.ft_to_m(road.spec.lane_width)
    center = road.lane_center_offset(route.lane)
    return center - w / 2, center + w / 2


def _judge(s, station, offset, road, route, footprint, tires, lane_lo, lane_hi,
           lift_left, lift_right, criteria):
    qw, qx, qy, qz = s[3], s[4], s[5], s[6]
    roll = math.atan2(2 * (qy * qz + qw * qx), 1 - 2 * (qx * qx + qy * qy))
    if abs(roll) > criteria.max_roll:
        return Verdict.ROLLOVER, f"roll {math.degrees(roll):.1f} deg"
    if lift_left > criteria.wheel_lift_pair_duration or lift_right > criteria.wheel_lift_pair_duration:
        side = "left" if lift_left > lift_right else "right"
        return Verdict.ROLLOVER, f"{side} wheels airborne for {max(lift_left, lift_right):.2f} s"
    yaw = math.atan2(2 * (qx * qy + qw * qz), 1 - 2 * (qy * qy + qz * qz))
    err = _wrap(yaw - road.heading(station))
    if abs(err) > criteria.max_heading_error:
        return Verdict.SPIN_OUT, f"heading error {math.degrees(err):.1f} deg"
    verdict, detail = _off_roadway(s, road, tires)
    if verdict is not None:
        return verdict, detail
    c, sn = math.cos(yaw), math.sin(yaw)
    x, y = s[0], s[1]
    for bx, by in footprint:
        _, off = road.to_road(x + bx * c - by * sn, y + bx * sn + by * c)
        if off < lane_lo or off > lane_hi:
            edge = "outer" if off < lane_lo else "inner"
            return Verdict.LANE_DEPARTURE, f"the vehicle edge crossed the {edge} lane edge by " \
                f"{units.m_to_ft(max(lane_lo - off, off - lane_hi)):.2f} ft"
    limit = criteria.max_lateral_offset
    if limit is not None and abs(offset - route.path_offset) > limit:
        return Verdict.LANE_DEPARTURE, f"offset {units.m_to_ft(offset - route.path_offset):.2f} ft " \
            "from the route"
    return None, ""


def _off_roadway(s, road, tires):
    qw, qx, qy, qz = s[3], s[4], s[5], s[6]
    yaw = math.atan2(2 * (qx * qy + qw * qz), 1 - 2 * (qy * qy + qz * qz))
    c, sn = math.cos(yaw), math.sin(yaw)
    for bx, by in tires:
        _, off = road.to_road(s[0] + bx * c - by * sn, s[1] + bx * sn + by * c)
        if not road.on_roadway(off):
            return Verdict.LANE_DEPARTURE, "a tire left the paved roadway"
    return None, ""


def _log_row(t, station, offset, route, s, steer_angle, throttle, brake, phase, report):
    qw, qx, qy, qz = s[3], s[4], s[5], s[6]
    roll = math.atan2(2 * (qy * qz + qw * qx), 1 - 2 * (qx * qx + qy * qy))
    pitch = -math.asin(max(-1.0, min(1.0, 2 * (qx * qz - qw * qy))))
    yaw = math.atan2(2 * (qx * qy + qw * qz), 1 - 2 * (qy * qy + qz * qz))
    ft = units.FT
    return (
        round(t, 6), station / ft, s[0] / ft, s[1] / ft, s[2] / ft,
        math.hypot(s[7], s[8]) / units.MPH,
        s[7] / ft, s[8] / ft, s[9] / ft, s[10], s[11], s[12],
        math.degrees(roll), math.degrees(pitch), math.degrees(yaw), math.degrees(steer_angle),
        throttle, brake, phase.value,
        *(report[i, 2] / _LBF for i in range(4)),
        *(report[i, 3] for i in range(4)),
        *(report[i, 4] for i in range(4)),
        (offset - route.path_offset) / ft,
    )


# --- speed search --------------------------------------------------------------

@dataclass
class SpeedSearchResult:
    vehicle_class: str
    condition: str
    max_safe_speed: float  # mph
    increment: float  # mph
    aashto_design_speed: float | None = None  # mph
    observed_max_speed: float | None = None  # mph
    first_failing_speed: float | None = None
    failure_mode: str | None = None
    tested: list = field(default_factory=list)  # (v_curve, verdict) in test order
    warning: str | None = None
    boundary_runs: dict = field(default_factory=dict, repr=False)  # label -> RunOutcome

    @property
    def deviations(self) -> dict:
        """Percent deviation of each estimate from the observed speed."""
        return {
            "simulated": percent_deviation(self.max_safe_speed, self.observed_max_speed),
            "aashto": percent_deviation(self.aashto_design_speed, self.observed_max_speed),
        }


def percent_deviation(estimate, observed):
    if estimate is None or observed is None:
        return None
    return (estimate - observed) / observed * 100.0


def find_max_safe_speed(vehicle, road, route, condition, start=30.0, increment=1.0, *,
                        criteria=SafetyCriteria(), control=ControlParams(), dt=DT,
                        base_margin=5.0, refine=None, probe=1, ceiling=150.0) -> SpeedSearchResult:
    """Raise the curve speed from `start` by `increment` until a run fails.

    Every run uses v_base = v_curve + `base_margin`. The result is the last
    safe speed before the first failure. After the failure `probe` more
    speeds are tried; any safe verdict among them is reported as a
    non-monotone pattern in `warning` (the result is not moved). With
    `refine` (mph, e.g. 0.25) the gap above the boundary is re-stepped at
    that finer increment.
    """
    if not increment > 0:
        raise SearchFault("increment must be positive")
    name = getattr(condition, "name", str(condition))
    result = SpeedSearchResult(vehicle.name, name, float("nan"), increment)

    def run(v):
        outcome = simulate_run(vehicle, road, route, v + base_margin, v, condition, criteria, control, dt)
        result.tested.append((v, outcome.verdict.value))
        log.debug("%s/%s v_curve=%.2f mph -> %s", vehicle.name, name, v, outcome.verdict.value)
        return outcome

    first = run(start)
    if not first.safe:
        raise SearchFault(
            f"{vehicle.name}/{name}: start speed {start} mph is not safe "
            f"({first.verdict.value}: {first.detail}); lower the start speed")
    last_safe, last_run = start, first
    v = start
    while True:
        v = round(v + increment, 6)
        if v > ceiling:
            raise SearchFault(f"{vehicle.name}/{name}: still safe at the {ceiling} mph ceiling")
        outcome = run(v)
        if not outcome.safe:
            break
        last_safe, last_run = v, outcome
    fail_v, fail_run = v, outcome

    if refine:
        step_v = last_safe
        while True:
            step_v = round(step_v + refine, 6)
            if step_v >= fail_v:
                break
            finer = run(step_v)
            if not finer.safe:
                fail_v, fail_run = step_v, finer
                break
            last_safe, last_run = step_v, finer
        result.increment = refine

    later = []
    for k in range(1, probe + 1):
        pv = round(fail_v + k * increment, 6)
        if pv > ceiling:
            break
        if run(pv).safe:
            later.append(pv)
    if later:
        result.warning = (f"non-monotone safety pattern: unsafe at {fail_v} mph but safe at "
                          f"{', '.join(f'{x:g}' for x in later)} mph")
        log.warning("%s/%s: %s", vehicle.name, name, result.warning)

    result.max_safe_speed = last_safe
    result.first_failing_speed = fail_v
    result.failure_mode = fail_run.verdict.value
    result.boundary_runs = {"max_safe": last_run, "first_failing": fail_run}
    return result


# --- AASHTO benchmark ----------------------------------------------------------

@dataclass(frozen=True)
class AASHTOFrictionTable:
    """(design speed mph, maximum side friction factor) pairs."""

    points: tuple[tuple[float, float], ...]
    source: str = ""

    def __post_init__(self):
        sp = [p[0] for p in self.points]
        f = [p[1] for p in self.points]
        if not self.points:
            raise ValueError("friction table is empty")
        if any(b <= a for a, b in zip(sp, sp[1:])):
            raise ValueError("table speeds must increase")
        if any(b > a for a, b in zip(f, f[1:])):
            raise ValueError("table friction factors must not increase with speed")

    def f_max(self, speed):
        """Linear interpolation, held constant beyond the table ends."""
        pts = self.points
        if speed <= pts[0][0]:
            return pts[0][1]
        for (s0, f0), (s1, f1) in zip(pts, pts[1:]):
            if speed <= s1:
                return f0 + (f1 - f0) * (speed - s0) / (s1 - s0)
        return pts[-1][1]

    @classmethod
    def constant(cls, f):
        return cls(((0.0, f),), source=f"constant f_max = {f}")


def load_aashto_table(path=None) -> AASHTOFrictionTable:
    path = Path(path) if path else Path(__file__).parent / "data" / "aashto_fmax.csv"
    source = []
    with open(path, newline="") as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                source.append(line[1:].strip())
            elif line.strip():
                lines.append(line)
    rows = list(csv.DictReader(lines))
    return AASHTOFrictionTable(tuple((float(r["design_speed_mph"]), float(r["f_max"])) for r in rows),
                               " ".join(source))


class AASHTOResult(NamedTuple):
    speed: float  # mph, converged
    rounded: int  # mph, rounded down to a multiple of 5
    iterations: int


def aashto_design_speed(radius, superelevation, table: AASHTOFrictionTable | None = None,
                        tol=0.01, max_iter=100) -> AASHTOResult:
    """Solve v = sqrt(15 R (e + f_max(v))) for v in mph, R in ft."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    if not 0 <= superelevation < 0.12:
        raise ValueError("superelevation must lie in [0, 0.12)")
    table = table or load_aashto_table()
    v = math.sqrt(15.0 * radius * (superelevation + table.points[0][1]))
    for i in range(1, max_iter + 1):
        nxt = math.sqrt(15.0 * radius * (superelevation + table.f_max(v)))
        if abs(nxt - v) < tol:
            return AASHTOResult(nxt, int(nxt // 5) * 5, i)
        v = nxt
    raise SearchFault(f"AASHTO fixed point did not converge in {max_iter} iterations")


# --- comparison ----------------------------------------------------------------

REPORT_SCHEMA = "comparison/1"
REPORT_COLUMNS = (
    "vehicle", "condition", "simulated_max_safe_mph", "increment_mph", "first_failing_mph",
    "failure_mode", "aashto_design_mph", "aashto_design_rounded_mph", "observed_max_mph",
    "deviation_simulated_pct", "deviation_aashto_pct", "warning",
)


@dataclass
class ComparisonReport:
    rows: list[dict]

    def __len__(self):
        return len(self.rows)

    def write_csv(self, fh, header_lines=()):
        """Comment header lines, then one CSV row per result (blank = not available)."""
        _write_header(fh, header_lines, REPORT_SCHEMA)
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in self.rows:
            writer.writerow([_fmt(row[c]) for c in REPORT_COLUMNS])

    def to_dict(self, header: dict | None = None) -> dict:
        return {"schema": REPORT_SCHEMA, **(header or {}), "rows": self.rows}


def compare_report(results, aashto: AASHTOResult | None = None) -> ComparisonReport:
    """One row per search result; deviations left blank without an observed speed."""
    rows = []
    for r in results:
        dev = r.deviations
        rows.append({
            "vehicle": r.vehicle_class,
            "condition": r.condition,
            "simulated_max_safe_mph": r.max_safe_speed,
            "increment_mph": r.increment,
            "first_failing_mph": r.first_failing_speed,
            "failure_mode": r.failure_mode,
            "aashto_design_mph": None if r.aashto_design_speed is None else round(r.aashto_design_speed, 2),
            "aashto_design_rounded_mph": None if aashto is None else aashto.rounded,
            "observed_max_mph": r.observed_max_speed,
            "deviation_simulated_pct": None if dev["simulated"] is None else round(dev["simulated"], 2),
            "deviation_aashto_pct": None if dev["aashto"] is None else round(dev["aashto"], 2),
            "warning": r.warning,
        })
    return ComparisonReport(rows)


# --- files ---------------------------------------------------------------------

def _fmt(value):
    """Stable text form of a report cell."""
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def _write_header(fh, header_lines, schema):
    for line in header_lines:
        fh.write(f"# {line}\n")
    fh.write(f"# schema: {schema}\n")


def write_trajectory_csv(outcome: RunOutcome, fh, header_lines=()):
    """Trajectory log of one run (US customary units, angles in degrees)."""
    _write_header(fh, header_lines, TRAJECTORY_SCHEMA)
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(TRAJECTORY_COLUMNS)
    for row in outcome.trajectory:
        writer.writerow([_fmt(float(v)) if not isinstance(v, str) else v for v in row])
