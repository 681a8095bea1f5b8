"""Parametric horizontal curve: alignment, superelevation profile, waypoint routes.

The alignment is a simple curve (tangent, circular arc, tangent) turning left
in the direction of increasing station, so the right-hand travel lanes are the
outer lanes. Station 0 is the start of the approach tangent at the world
origin, heading along +x.

Lateral offsets are measured from the centerline and are positive toward the
curve center. Cross slope follows the same sign: a positive value lowers the
side nearer the curve center. `CurveSpec` carries feet (it mirrors the config
file); every other quantity in this module is SI.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal, NamedTuple

from . import units
from .config import load_toml

AUTO = "auto"
LANES = ("inner", "outer")


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class CurveSpec:
    """Curve description in feet, as written in curve files."""

    radius: float = 712.0
    arc_length: float = 1400.0
    superelevation_rate: float = 0.078
    lane_width: float = 11.0
    shoulder_width: float = 4.0
    lane_count: int = 1
    normal_crown_slope: float = -0.02
    approach_tangent_length: float = 300.0
    departure_tangent_length: float = 250.0
    runoff_length: float | str = AUTO
    runout_length: float | str = AUTO
    runoff_fraction_before_pc: float = 0.8
    max_relative_gradient: float = 0.005

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError(f"radius must be positive, got {self.radius}")
        if not self.arc_length > 0:
            raise GeometryError(f"arc_length must be positive, got {self.arc_length}")
        if not 0 <= self.superelevation_rate < 0.12:
            raise GeometryError(
                f"superelevation_rate must be in [0, 0.12), got {self.superelevation_rate}")
        if not self.lane_width > 0:
            raise GeometryError(f"lane_width must be positive, got {self.lane_width}")
        if self.lane_count < 1:
            raise GeometryError("lane_count must be at least 1")
        if not 0 <= self.runoff_fraction_before_pc <= 1:
            raise GeometryError("runoff_fraction_before_pc must lie in [0, 1]")
        if self.normal_crown_slope > 0:
            raise GeometryError("normal_crown_slope must be <= 0 (crown drains outward)")
        if not self.max_relative_gradient > 0:
            raise GeometryError("max_relative_gradient must be positive")
        for name in ("shoulder_width", "approach_tangent_length", "departure_tangent_length"):
            if getattr(self, name) < 0:
                raise GeometryError(f"{name} must not be negative")
        for name in ("runoff_length", "runout_length"):
            value = getattr(self, name)
            if value != AUTO and (isinstance(value, str) or value < 0):
                raise GeometryError(f"{name} must be 'auto' or a non-negative length")
        if self.arc_length / self.radius >= math.pi:
            raise GeometryError("curves sweeping half a circle or more are not supported")

    @property
    def rotated_width(self):
        return self.lane_width * self.lane_count


class RoadPose(NamedTuple):
    station: float
    world_position: tuple[float, float, float]
    heading: float
    cross_slope: float
    grade: float


class SurfaceSample(NamedTuple):
    elevation: float
    normal: tuple[float, float, float]
    cross_slope: float
    station: float
    offset: float


@dataclass(frozen=True)
class RoadModel:
    spec: CurveSpec
    radius: float
    pc_station: float
    pt_station: float
    end_station: float
    sweep_angle: float
    runoff_length: float
    runout_length: float
    # superelevation profile of the outer half: knot stations and cross slopes
    profile_stations: tuple[float, ...]
    profile_slopes: tuple[float, ...]
    half_width: float = field(repr=False)
    _pt_point: tuple[float, float] = field(repr=False)

    # --- transition stations -------------------------------------------------
    @property
    def entry_runout_start(self):
        return self.profile_stations[0]

    @property
    def entry_runoff_end(self):
        return self.profile_stations[2]

    @property
    def exit_runoff_start(self):
        return self.profile_stations[3]

    @property
    def exit_runout_end(self):
        return self.profile_stations[5]

    @property
    def superelevation_rate(self):
        return self.spec.superelevation_rate

    @property
    def crown(self):
        return self.spec.normal_crown_slope

    # --- profile ---------------------------------------------------------------
    def cross_slope(self, station):
        """Cross slope of the outer half of the roadway at `station`."""
        st = self.profile_stations
        sl = self.profile_slopes
        if station <= st[0]:
            return sl[0]
        if station >= st[-1]:
            return sl[-1]
        i = bisect.bisect_right(st, station) - 1
        s0, s1 = st[i], st[i + 1]
        if s1 <= s0:
            return sl[i + 1]
        return sl[i] + (sl[i + 1] - sl[i]) * (station - s0) / (s1 - s0)

    def _profile_gradient(self, station):
        st = self.profile_stations
        sl = self.profile_slopes
        if station <= st[0] or station >= st[-1]:
            return 0.0
        i = bisect.bisect_right(st, station) - 1
        width = st[i + 1] - st[i]
        return (sl[i + 1] - sl[i]) / width if width > 0 else 0.0

    def lateral_slope(self, station, offset):
        """Cross slope governing the half of the section that `offset` falls in.

        Inside the runout the inner half keeps its crown until the outer half
        has rotated up to match it (rotation about the centerline).
        """
        outer = self.cross_slope(station)
        if offset <= 0.0:
            return outer
        return max(outer, -self.spec.normal_crown_slope)

    def elevation(self, station, offset):
        return -self.lateral_slope(station, offset) * offset

    # --- alignment -------------------------------------------------------------
    def heading(self, station):
        if station <= self.pc_station:
            return 0.0
        if station >= self.pt_station:
            return self.sweep_angle
        return (station - self.pc_station) / self.radius

    def to_world(self, station, offset):
        """World (x, y, z) of a point given by station and offset."""
        if station <= self.pc_station:
            x, y = station, offset
        elif station <= self.pt_station:
            phi = (station - self.pc_station) / self.radius
            rho = self.radius - offset
            x = self.pc_station + rho * math.sin(phi)
            y = self.radius - rho * math.cos(phi)
        else:
            d = station - self.pt_station
            c, s = math.cos(self.sweep_angle), math.sin(self.sweep_angle)
            px, py = self._pt_point
            x = px + d * c - offset * s
            y = py + d * s + offset * c
        return (x, y, self.elevation(station, offset))

    def to_road(self, x, y):
        """Project a world point onto the alignment: returns (station, offset).

        The point is projected onto each of the approach tangent, the arc
        and the departure tangent; the closest piece wins, so curves that
        turn back past 90 degrees stay unambiguous.
        """
        return _project(self.pc_station, self.pt_station, self.radius, self.sweep_angle,
                        self._pt_point, x, y)[:2]

    def pose(self, station, offset=0.0):
        pos = self.to_world(station, offset)
        return RoadPose(station, pos, self.heading(station),
                        self.lateral_slope(station, offset), 0.0)

    def on_roadway(self, offset):
        return abs(offset) <= self.half_width

    def lane_center_offset(self, lane):
        n, w = self.spec.lane_count, units.ft_to_m(self.spec.lane_width)
        if lane == "outer":
            return -(n - 0.5) * w
        if lane == "inner":
            return (n - 0.5) * w
        raise GeometryError(f"unknown lane {lane!r}; expected one of {LANES}")


def _auto_or(value, auto_value):
    return auto_value if value == AUTO else units.ft_to_m(value)


def build_road(spec: CurveSpec) -> RoadModel:
    """Lay out the alignment and the superelevation transitions for `spec`."""
    R = units.ft_to_m(spec.radius)
    arc = units.ft_to_m(spec.arc_length)
    width = units.ft_to_m(spec.rotated_width)
    e, crown = spec.superelevation_rate, spec.normal_crown_slope
    grad = spec.max_relative_gradient

    if e == 0.0:
        # No superelevation to develop: the normal crown runs through the curve.
        runoff = runout = 0.0
    else:
        runoff = _auto_or(spec.runoff_length, width * e / grad)
        runout = _auto_or(spec.runout_length, width * abs(crown) / grad)
        tol = 1e-9
        if runoff > 0 and width * e / runoff > grad + tol:
            raise GeometryError(
                f"runoff of {spec.runoff_length} ft exceeds the maximum relative gradient {grad}")
        if runout > 0 and width * abs(crown) / runout > grad + tol:
            raise GeometryError(
                f"runout of {spec.runout_length} ft exceeds the maximum relative gradient {grad}")
        if runoff == 0 and e > 0:
            raise GeometryError("runoff length must be positive when superelevation is nonzero")
        if runout == 0 and crown != 0:
            raise GeometryError("runout length must be positive when the crown is nonzero")

    f = spec.runoff_fraction_before_pc
    pc = units.ft_to_m(spec.approach_tangent_length)
    pt = pc + arc
    end = pt + units.ft_to_m(spec.departure_tangent_length)
    lead = runout + f * runoff
    if lead > pc + 1e-9:
        raise GeometryError(
            f"superelevation transition ({units.m_to_ft(lead):.1f} ft before PC) "
            f"is longer than the approach tangent ({spec.approach_tangent_length} ft)")
    if lead > end - pt + 1e-9:
        raise GeometryError(
            f"superelevation transition ({units.m_to_ft(lead):.1f} ft past PT) "
            f"is longer than the departure tangent ({spec.departure_tangent_length} ft)")
    inside = (1.0 - f) * runoff
    if 2 * inside > arc + 1e-9:
        raise GeometryError("arc is too short to develop full superelevation")

    stations = (
        pc - lead,
        pc - f * runoff,
        pc + inside,
        pt - inside,
        pt + f * runoff,
        pt + lead,
    )
    slopes = (crown, 0.0, e, e, 0.0, crown) if e > 0 else (crown,) * 6
    sweep = arc / R
    pt_point = (pc + R * math.sin(sweep), R - R * math.cos(sweep))
    half_width = (spec.lane_count * units.ft_to_m(spec.lane_width)
                  + units.ft_to_m(spec.shoulder_width))
    return RoadModel(spec, R, pc, pt, end, sweep, runoff, runout,
                     stations, slopes, half_width, pt_point)


def sample_surface(model: RoadModel, x=None, y=None, *, station=None, offset=None):
    """Ground query at a world (x, y) or a (station, offset) pair.

    Returns a `SurfaceSample`, or None when the point lies outside the
    lanes and shoulders (no contact).
    """
    if station is None:
        station, offset = model.to_road(x, y)
    if not abs(offset) <= model.half_width:
        return None
    sigma = model.lateral_slope(station, offset)
    z = -sigma * offset
    # surface gradient in the (along, toward-center) frame
    dz_lat = -sigma
    if offset > 0.0 and sigma != model.cross_slope(station):
        dz_s = 0.0  # inner half still on its crown
    else:
        dz_s = -model._profile_gradient(station) * offset
    if model.pc_station < station < model.pt_station:
        dz_s *= model.radius / (model.radius - offset)
    h = model.heading(station)
    c, s = math.cos(h), math.sin(h)
    gx = dz_s * c - dz_lat * s
    gy = dz_s * s + dz_lat * c
    norm = math.sqrt(gx * gx + gy * gy + 1.0)
    return SurfaceSample(z, (-gx / norm, -gy / norm, 1.0 / norm), sigma, station, offset)


@dataclass(frozen=True)
class Route:
    """Ordered waypoints (m) along one lane, shifted toward the inner edge."""

    waypoints: tuple[tuple[float, float, float], ...]
    stations: tuple[float, ...]
    lane: Literal["inner", "outer"]
    centerline_offset: float
    spacing: float
    path_offset: float  # lateral offset of the whole route from the road centerline

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise GeometryError("a route needs at least two waypoints")
        if len(self.stations) != len(self.waypoints):
            raise GeometryError("stations and waypoints differ in length")

    def __len__(self):
        return len(self.waypoints)

    @property
    def length(self):
        return sum(math.dist(a, b) for a, b in zip(self.waypoints, self.waypoints[1:]))

    def reversed(self) -> Route:
        return Route(self.waypoints[::-1], self.stations[::-1], self.lane,
                     self.centerline_offset, self.spacing, self.path_offset)


def generate_route(model: RoadModel, lane="outer", offset=units.ft_to_m(1.25),
                   spacing=units.ft_to_m(10.0)) -> Route:
    """Waypoints along `lane`, shifted `offset` m toward the curve center.

    Waypoints are evenly spaced by distance along the shifted path, so the
    spacing on the arc is measured on the route itself, not the centerline.
    """
    w = units.ft_to_m(model.spec.lane_width)
    if not abs(offset) < w / 2:
        raise GeometryError(
            f"route offset {units.m_to_ft(offset):.2f} ft must be under half the lane width")
    if not spacing > 0:
        raise GeometryError("waypoint spacing must be positive")
    y = model.lane_center_offset(lane) + offset
    rho = model.radius - y
    arc = rho * model.sweep_angle
    tail = model.end_station - model.pt_station
    total = model.pc_station + arc + tail
    n = max(1, round(total / spacing))
    step = total / n

    points, stations = [], []
    for i in range(n + 1):
        d = i * step
        if d <= model.pc_station:
            st = d
        elif d <= model.pc_station + arc:
            st = model.pc_station + (d - model.pc_station) * model.radius / rho
        else:
            st = model.pt_station + (d - model.pc_station - arc)
        stations.append(st)
        points.append(model.to_world(st, y))
    return Route(tuple(points), tuple(stations), lane, offset, step, y)


# --- files ---------------------------------------------------------------------

_CURVE_KEYS = {
    "radius_ft": "radius",
    "arc_length_ft": "arc_length",
    "superelevation_rate": "superelevation_rate",
    "lane_width_ft": "lane_width",
    "shoulder_width_ft": "shoulder_width",
    "lane_count": "lane_count",
    "normal_crown_slope": "normal_crown_slope",
    "approach_tangent_length_ft": "approach_tangent_length",
    "departure_tangent_length_ft": "departure_tangent_length",
    "runoff_length_ft": "runoff_length",
    "runout_length_ft": "runout_length",
    "runoff_fraction_before_pc": "runoff_fraction_before_pc",
    "max_relative_gradient": "max_relative_gradient",
}


def curve_spec_from_dict(data: dict, source="curve") -> CurveSpec:
    unknown = set(data) - set(_CURVE_KEYS)
    if unknown:
        raise GeometryError(f"{source}: unknown keys {sorted(unknown)}")
    return CurveSpec(**{_CURVE_KEYS[k]: v for k, v in data.items()})


def curve_spec_to_dict(spec: CurveSpec) -> dict:
    inverse = {v: k for k, v in _CURVE_KEYS.items()}
    return {inverse[k]: v for k, v in asdict(spec).items()}


def load_curve_spec(path) -> CurveSpec:
    return curve_spec_from_dict(load_toml(path), source=str(path))


ROUTE_COLUMNS = ("index", "x_ft", "y_ft", "z_ft", "station_ft", "offset_ft")


def write_route_csv(route: Route, fh, header_lines=()):
    for line in header_lines:
        fh.write(f"# {line}\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(ROUTE_COLUMNS)
    off = units.m_to_ft(route.centerline_offset)
    for i, ((x, y, z), st) in enumerate(zip(route.waypoints, route.stations)):
        writer.writerow([i, repr(units.m_to_ft(x)), repr(units.m_to_ft(y)),
                         repr(units.m_to_ft(z)), repr(units.m_to_ft(st)), repr(off)])


def read_route_csv(path, model: RoadModel, lane="outer") -> Route:
    """Load a route exported by `write_route_csv`."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.DictReader(line for line in fh if not line.startswith("#"))]
    if len(rows) < 2:
        raise GeometryError(f"{path}: a route needs at least two waypoints")
    pts = tuple(tuple(units.ft_to_m(float(r[k])) for k in ("x_ft", "y_ft", "z_ft")) for r in rows)
    stations = tuple(units.ft_to_m(float(r["station_ft"])) for r in rows)
    offset = units.ft_to_m(float(rows[0]["offset_ft"]))
    spacing = math.dist(pts[0], pts[1])
    return Route(pts, stations, lane, offset, spacing,
                 model.lane_center_offset(lane) + offset)


def default_curve_path() -> Path:
    return Path(__file__).parent / "data" / "curve_study.toml"


def _project(pc, pt, R, sweep, pt_point, x, y):
    """(station, offset, heading) of the closest alignment piece to (x, y)."""
    best = (x, y, 0.0)
    # distance from the approach tangent (a ray ending at the PC)
    dist = abs(y) if x <= pc else math.hypot(x - pc, y)
    dy = R - y
    phi = math.atan2(x - pc, dy)
    rho = math.hypot(x - pc, dy)
    if 0.0 <= phi <= sweep:
        d = abs(R - rho)
        if d < dist:
            dist, best = d, (pc + R * phi, R - rho, phi)
    px, py = pt_point
    c, s = math.cos(sweep), math.sin(sweep)
    rx, ry = x - px, y - py
    along = rx * c + ry * s
    off = -rx * s + ry * c
    d = abs(off) if along >= 0.0 else math.hypot(rx, ry)
    if d < dist:
        best = (pt + along, off, sweep)
    return best
