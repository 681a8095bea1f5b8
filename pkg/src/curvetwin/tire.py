"""Slip-friction tire curves and the per-wheel suspension/contact update.

Slip conventions (the engine-style curves are used verbatim on these):

    longitudinal slip = (spin_rate * radius - v_long) / max(|v_long|, EPS)
    lateral slip      = v_lat / max(|v_long|, EPS)          (tan of slip angle)

with EPS = 0.5 m/s regularizing the ratio near standstill.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .config import load_toml

SLIP_EPS = 0.5  # m/s


@dataclass(frozen=True)
class FrictionCurve:
    extremum_slip: float
    extremum_value: float
    asymptote_slip: float
    asymptote_value: float
    stiffness: float = 1.0

    def __post_init__(self):
        if not 0 < self.extremum_slip < self.asymptote_slip:
            raise ValueError("friction curve needs 0 < extremum_slip < asymptote_slip")
        if not self.extremum_value >= self.asymptote_value > 0:
            raise ValueError("friction curve needs extremum_value >= asymptote_value > 0")
        if not self.stiffness > 0:
            raise ValueError("stiffness must be positive")

    @property
    def peak(self):
        """Largest force coefficient the curve can deliver, stiffness included."""
        return self.extremum_value * self.stiffness

    def scaled(self, k: float) -> FrictionCurve:
        return FrictionCurve(self.extremum_slip, self.extremum_value * k,
                             self.asymptote_slip, self.asymptote_value * k, self.stiffness)


def evaluate_friction(curve: FrictionCurve, slip: float) -> float:
    """Friction coefficient at a non-negative slip, stiffness not applied.

    Rising branch: the cubic Hermite through (0, 0) and the extremum with
    slope 2*value/slip at the origin and zero slope at the extremum (it
    reduces to a parabola). Falling branch: Hermite smoothstep from the
    extremum to the asymptote, zero slope at both ends. Flat afterwards.
    """
    if slip < 0:
        raise ValueError(f"slip must be non-negative, got {slip}")
    se = curve.extremum_slip
    if slip <= se:
        t = slip / se
        return curve.extremum_value * t * (2.0 - t)
    sa = curve.asymptote_slip
    if slip < sa:
        t = (slip - se) / (sa - se)
        return curve.extremum_value + (curve.asymptote_value - curve.extremum_value) * t * t * (3.0 - 2.0 * t)
    return curve.asymptote_value


def friction_slope(curve: FrictionCurve, slip: float) -> float:
    """d(coefficient)/d(slip) of `evaluate_friction`."""
    se = curve.extremum_slip
    if slip <= se:
        return 2.0 * curve.extremum_value * (1.0 - slip / se) / se
    sa = curve.asymptote_slip
    if slip < sa:
        t = (slip - se) / (sa - se)
        return (curve.asymptote_value - curve.extremum_value) * 6.0 * t * (1.0 - t) / (sa - se)
    return 0.0


@dataclass(frozen=True)
class SurfaceCondition:
    name: str
    longitudinal: FrictionCurve
    lateral: FrictionCurve

    def scaled(self, k: float, name=None) -> SurfaceCondition:
        return SurfaceCondition(name or f"{self.name}x{k:g}",
                                self.longitudinal.scaled(k), self.lateral.scaled(k))


# Engine-default friction (dry) and the reduced set for wet pavement.
DRY = SurfaceCondition(
    "dry",
    FrictionCurve(0.40, 1.00, 0.80, 0.50, 1.00),
    FrictionCurve(0.40, 1.00, 0.80, 0.50, 1.00),
)
WET = SurfaceCondition(
    "wet",
    FrictionCurve(0.40, 0.65, 0.80, 0.35, 0.85),
    FrictionCurve(0.40, 0.65, 0.80, 0.35, 0.85),
)
CONDITIONS = {"dry": DRY, "wet": WET}

_CURVE_FIELDS = ("extremum_slip", "extremum_value", "asymptote_slip", "asymptote_value", "stiffness")


def conditions_from_dict(data: dict) -> dict[str, SurfaceCondition]:
    out = {}
    for name, axes in data.items():
        try:
            curves = {axis: FrictionCurve(**{k: float(axes[axis][k]) for k in _CURVE_FIELDS})
                      for axis in ("longitudinal", "lateral")}
        except KeyError as exc:
            raise ValueError(f"surface condition {name!r} is missing {exc}") from None
        out[name] = SurfaceCondition(name, curves["longitudinal"], curves["lateral"])
    return out


def conditions_to_dict(conditions) -> dict:
    return {c.name: {axis: {k: getattr(getattr(c, axis), k) for k in _CURVE_FIELDS}
                     for axis in ("longitudinal", "lateral")}
            for c in conditions}


def load_conditions(path) -> dict[str, SurfaceCondition]:
    return conditions_from_dict(load_toml(path))


@dataclass(frozen=True)
class WheelSpec:
    radius: float  # m
    suspension_rest_length: float  # m
    spring_rate: float  # N/m
    damper_rate: float  # N*s/m
    max_brake_torque: float  # N*m
    steerable: bool
    driven: bool
    rotational_inertia: float  # kg*m^2

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("wheel radius must be positive")
        if not self.spring_rate > 0:
            raise ValueError("spring_rate must be positive")
        if self.damper_rate < 0:
            raise ValueError("damper_rate must not be negative")
        if not self.rotational_inertia > 0:
            raise ValueError("rotational_inertia must be positive")


class WheelState(NamedTuple):
    spin_rate: float = 0.0
    suspension_compression: float = 0.0
    in_contact: bool = False
    normal_force: float = 0.0
    longitudinal_slip: float = 0.0
    lateral_slip: float = 0.0
    tire_force: tuple[float, float] = (0.0, 0.0)
    station_of_contact: float = float("nan")


class Contact(NamedTuple):
    """Suspension ray hit: compression (m), its rate (m/s) and the road station."""

    compression: float
    compression_rate: float
    station: float


def suspension_force(spec: WheelSpec, compression: float, compression_rate: float) -> float:
    if compression <= 0.0:
        return 0.0
    n = spec.spring_rate * compression + spec.damper_rate * compression_rate
    return n if n > 0.0 else 0.0


def tire_force(surface: SurfaceCondition, normal_force, spin_rate, radius, v_long, v_lat):
    """Planar tire force (F_long, F_lat) with both slips and dF_long/d(spin)."""
    den = abs(v_long)
    if den < SLIP_EPS:
        den = SLIP_EPS
    kappa = (spin_rate * radius - v_long) / den
    alpha = v_lat / den
    lon, lat = surface.longitudinal, surface.lateral
    ak = abs(kappa)
    aa = abs(alpha)
    fx = normal_force * evaluate_friction(lon, ak) * lon.stiffness
    fy = normal_force * evaluate_friction(lat, aa) * lat.stiffness
    if kappa < 0.0:
        fx = -fx
    if alpha > 0.0:
        fy = -fy
    dfx = normal_force * lon.stiffness * friction_slope(lon, ak) * radius / den
    # friction ellipse
    xmax = normal_force * lon.peak
    ymax = normal_force * lat.peak
    if xmax > 0.0:
        r2 = (fx / xmax) ** 2 + (fy / ymax) ** 2
        if r2 > 1.0:
            k = 1.0 / math.sqrt(r2)
            fx *= k
            fy *= k
            dfx *= k
    return fx, fy, kappa, alpha, dfx


def update_wheel(spec: WheelSpec, state: WheelState, contact: Contact | None,
                 velocity: tuple[float, float], drive_torque: float, brake_torque: float,
                 dt: float, surface: SurfaceCondition):
    """Advance one wheel by `dt`.

    `velocity` is the contact-point velocity resolved along the wheel's
    heading and its lateral axis in the ground plane. Returns the new
    `WheelState`, the contact force (F_long, F_lat, N) in that frame, and the
    torque the tire exerts on the wheel.

    The spin update treats the tire's longitudinal force implicitly
    (linearized in spin) so the wheel stays stable at engine-scale inertia.
    Brake torque acts like Coulomb friction: it can stop the wheel but never
    reverse it.
    """
    omega = state.spin_rate
    inertia = spec.rotational_inertia
    r = spec.radius
    if contact is None or contact.compression <= 0.0:
        normal = 0.0
    else:
        normal = suspension_force(spec, contact.compression, contact.compression_rate)

    if normal > 0.0:
        v_long, v_lat = velocity
        fx, _, _, _, dfx = tire_force(surface, normal, omega, r, v_long, v_lat)
        if dfx < 0.0:
            dfx = 0.0
        i_eff = inertia + dt * r * dfx
        free = omega + dt * (drive_torque - fx * r) / i_eff
    else:
        i_eff = inertia
        free = omega + dt * drive_torque / inertia
    stop = dt * brake_torque / i_eff
    if abs(free) <= stop:
        omega_new = 0.0
    else:
        omega_new = free - stop if free > 0.0 else free + stop

    if normal > 0.0:
        fx, fy, kappa, alpha, _ = tire_force(surface, normal, omega_new, r, *velocity)
        new = WheelState(omega_new, contact.compression, True, normal, kappa, alpha,
                         (fx, fy), contact.station)
        return new, (fx, fy, normal), -fx * r
    compression = contact.compression if contact is not None else 0.0
    return WheelState(omega_new, compression), (0.0, 0.0, 0.0), 0.0
