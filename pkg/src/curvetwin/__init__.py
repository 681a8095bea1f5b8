"""Vehicle-on-curve digital twin: road geometry, tire model, 6-DOF vehicle
dynamics, scripted driver, safe-speed search and the AASHTO benchmark."""

__version__ = "0.1.0"

from .config import ConfigError
from .control import ControlParams, Phase, drive_phase, plan_phases, steer
from .dynamics import SimulationFault, VehicleSpec, load_vehicle, step
from .geometry import CurveSpec, GeometryError, Route, build_road, generate_route, sample_surface
from .search import (
    AASHTOFrictionTable,
    SafetyCriteria,
    SearchFault,
    Verdict,
    aashto_design_speed,
    compare_report,
    find_max_safe_speed,
    simulate_run,
)
from .tire import DRY, WET, FrictionCurve, SurfaceCondition, evaluate_friction

__all__ = [
    "AASHTOFrictionTable", "ConfigError", "ControlParams", "CurveSpec", "DRY", "FrictionCurve",
    "GeometryError", "Phase", "Route", "SafetyCriteria", "SearchFault", "SimulationFault",
    "SurfaceCondition", "VehicleSpec", "Verdict", "WET", "aashto_design_speed", "build_road",
    "compare_report", "drive_phase", "evaluate_friction", "find_max_safe_speed",
    "generate_route", "load_vehicle", "plan_phases", "sample_surface", "simulate_run", "steer",
    "step",
]
