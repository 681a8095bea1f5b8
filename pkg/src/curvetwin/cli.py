"""Command-line interface: scenario configs, single runs, sweeps, the AASHTO
benchmark and waypoint export.

Exit codes: 0 success (or safe verdict), 1 usage or config error, 2 unsafe
verdict, 3 internal fault.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__, units
from .config import ConfigError, config_hash, dumps_toml, load_toml
from .control import ControlError, ControlParams
from .dynamics import SimulationFault, vehicle_from_dict
from .geometry import (GeometryError, build_road, curve_spec_from_dict, curve_spec_to_dict,
                       generate_route, read_route_csv, write_route_csv)
from .search import (AASHTOFrictionTable, SafetyCriteria, SearchFault, aashto_design_speed,
                     compare_report, find_max_safe_speed, load_aashto_table, simulate_run,
                     write_trajectory_csv)
from .tire import conditions_from_dict, conditions_to_dict

log = logging.getLogger("curvetwin")

EXIT_OK, EXIT_CONFIG, EXIT_UNSAFE, EXIT_FAULT = 0, 1, 2, 3
DATA_DIR = Path(__file__).parent / "data"
DEFAULT_SCENARIO = DATA_DIR / "scenario_default.toml"
UNITS_LINE = "units: lengths ft, speeds mph, forces lbf, angles deg, time s"
MANIFEST = "MANIFEST.json"

_TOP_KEYS = {"output_dir", "deterministic", "curve", "route", "vehicles", "surfaces", "control",
             "safety", "search", "simulation", "aashto"}
_SEARCH_DEFAULTS = {"start_mph": 30.0, "increment_mph": 1.0, "base_margin_mph": 5.0, "probe": 1,
                    "ceiling_mph": 150.0, "refine_mph": 0.0, "jobs": 1}
_SIM_DEFAULTS = {"dt_s": 0.002, "settle_time_s": 1.0, "log_rate_hz": 50.0}
_DEFAULT_VEHICLES = {"sedan": "vehicles/sedan.toml", "suv": "vehicles/suv.toml",
                     "pickup": "vehicles/pickup.toml"}
_ROUTE_DEFAULTS = {"lane": "outer", "offset_ft": 1.25, "spacing_ft": 10.0}


# --- scenario -------------------------------------------------------------------

@dataclass
class Scenario:
    """A resolved scenario config. `resolved` is the canonical, hashable form."""

    source: Path
    road: object
    route: object
    vehicles: dict
    conditions: dict
    selected_conditions: list
    control: ControlParams
    safety: SafetyCriteria
    search: dict
    simulation: dict
    aashto_table: AASHTOFrictionTable
    output_dir: Path
    resolved: dict = field(repr=False)

    @property
    def hash(self) -> str:
        return config_hash(self.resolved)

    def header_lines(self):
        return [f"curvetwin {__version__}", f"config_hash: {self.hash}", UNITS_LINE]

    def header_dict(self):
        return {"tool": "curvetwin", "version": __version__, "config_hash": self.hash,
                "units": UNITS_LINE.split(": ", 1)[1]}


def _resolve(base: Path, name: str) -> Path:
    """A config path: relative to the config file, then to the shipped data."""
    p = Path(name)
    if p.is_absolute():
        return p
    for root in (base, DATA_DIR):
        if (root / p).exists():
            return root / p
    return base / p


def _section(data, name, allowed=None, default=None):
    sec = data.get(name, {} if default is None else default)
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    if allowed is not None:
        unknown = set(sec) - set(allowed)
        if unknown:
            raise ConfigError(f"[{name}]: unknown keys {sorted(unknown)}")
    return sec


def load_scenario(path=None) -> Scenario:
    """Read and validate a scenario file; every referenced file must resolve."""
    path = Path(path) if path else DEFAULT_SCENARIO
    data = load_toml(path)
    base = path.parent
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown top-level keys {sorted(unknown)}")

    try:
        curve_sec = dict(_section(data, "curve"))
        curve_data = {}
        if "file" in curve_sec:
            curve_data.update(load_toml(_resolve(base, curve_sec.pop("file"))))
        curve_data.update(curve_sec)
        curve = curve_spec_from_dict(curve_data, source=f"{path} [curve]")
        road = build_road(curve)

        route_sec = {**_ROUTE_DEFAULTS, **_section(data, "route", {*_ROUTE_DEFAULTS, "file"})}
        if "file" in route_sec:
            route_file = _resolve(base, route_sec["file"])
            if not route_file.exists():
                raise ConfigError(f"route file not found: {route_file}")
            route = read_route_csv(route_file, road, lane=route_sec["lane"])
            route_resolved = {"lane": route_sec["lane"],
                              "file_hash": config_hash(route_file.read_text())}
        else:
            route = generate_route(road, lane=route_sec["lane"],
                                   offset=units.ft_to_m(float(route_sec["offset_ft"])),
                                   spacing=units.ft_to_m(float(route_sec["spacing_ft"])))
            route_resolved = {k: route_sec[k] for k in _ROUTE_DEFAULTS}

        vehicles, vehicle_data = {}, {}
        for name, ref in _section(data, "vehicles", None, _DEFAULT_VEHICLES).items():
            vpath = _resolve(base, ref)
            raw = load_toml(vpath)
            vehicles[name] = vehicle_from_dict(raw, source=str(vpath))
            vehicle_data[name] = raw
        if not vehicles:
            raise ConfigError(f"{path}: [vehicles] lists no vehicle")

        surf_sec = _section(data, "surfaces", {"file", "conditions"})
        conditions = conditions_from_dict(load_toml(_resolve(base, surf_sec.get("file", "surfaces.toml"))))
        selected = list(surf_sec.get("conditions", list(conditions)))
        missing = [c for c in selected if c not in conditions]
        if missing:
            raise ConfigError(f"[surfaces] conditions {missing} are not defined in the surface file")

        control = ControlParams.from_dict(_section(data, "control"))
        safety = SafetyCriteria.from_dict(_section(data, "safety"))
        search = {**_SEARCH_DEFAULTS, **_section(data, "search", _SEARCH_DEFAULTS)}
        simulation = {**_SIM_DEFAULTS, **_section(data, "simulation", _SIM_DEFAULTS)}
        if not (search["increment_mph"] > 0 and search["start_mph"] > 0 and search["jobs"] >= 1
                and simulation["dt_s"] > 0):
            raise ConfigError("[search]/[simulation]: speeds, increment, dt and jobs must be positive")

        aashto_sec = _section(data, "aashto", {"table", "f_const"})
        if "f_const" in aashto_sec:
            table = AASHTOFrictionTable.constant(float(aashto_sec["f_const"]))
        else:
            table_path = _resolve(base, aashto_sec.get("table", "aashto_fmax.csv"))
            if not table_path.exists():
                raise ConfigError(f"AASHTO table not found: {table_path}")
            table = load_aashto_table(table_path)
    except FileNotFoundError as exc:
        raise ConfigError(f"file not found: {exc.filename}") from None
    except (GeometryError, ControlError, KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from None

    resolved = {
        "curve": curve_spec_to_dict(curve),
        "route": route_resolved,
        "vehicles": vehicle_data,
        "surfaces": {"conditions": selected,
                     "curves": conditions_to_dict(conditions[c] for c in selected)},
        "control": control.to_dict(),
        "safety": safety.to_dict(),
        "search": search,
        "simulation": simulation,
        "aashto": {"source": table.source, "points": [list(p) for p in table.points]},
    }
    out = Path(data.get("output_dir", "curvetwin-out"))
    return Scenario(path, road, route, vehicles, conditions, selected, control, safety, search,
                    simulation, table, out, resolved)


# --- output helpers --------------------------------------------------------------

def _prepare_out(out: Path, force: bool):
    if out.exists() and not out.is_dir():
        raise ConfigError(f"output path {out} exists and is not a directory")
    if out.exists() and any(out.iterdir()):
        if not force:
            raise ConfigError(f"output directory {out} is not empty; pass --force to overwrite")
        manifest = out / MANIFEST
        if manifest.exists():  # remove what the previous sweep wrote
            for name in json.loads(manifest.read_text()).get("files", []):
                (out / name).unlink(missing_ok=True)
            manifest.unlink()
    out.mkdir(parents=True, exist_ok=True)


def _write_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"


def _trajectory_text(outcome, header) -> str:
    buf = io.StringIO()
    write_trajectory_csv(outcome, buf, header)
    return buf.getvalue()


def load_observed(path) -> dict:
    """Observed maximum speeds: CSV with vehicle, condition, observed_max_mph."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    except FileNotFoundError:
        raise ConfigError(f"observed-speeds file not found: {path}") from None
    out = {}
    for i, row in enumerate(rows, start=2):
        try:
            out[(row["vehicle"].strip(), row["condition"].strip())] = float(row["observed_max_mph"])
        except (KeyError, TypeError, ValueError, AttributeError):
            raise ConfigError(f"{path}: line {i}: need vehicle, condition, observed_max_mph") from None
    return out


def _run_kwargs(sc: Scenario):
    return {"criteria": sc.safety, "control": sc.control, "dt": sc.simulation["dt_s"]}


# --- commands --------------------------------------------------------------------

def cmd_simulate(sc: Scenario, args) -> int:
    vehicle = _pick(sc.vehicles, args.vehicle, "vehicle")
    cond_name = args.condition or sc.selected_conditions[0]
    condition = _pick(sc.conditions, cond_name, "condition")
    v_curve = args.v_curve
    v_base = args.v_base if args.v_base is not None else v_curve + sc.search["base_margin_mph"]
    if not 0 < v_curve <= v_base:
        raise ConfigError("need 0 < v_curve <= v_base")
    out = Path(args.out) if args.out else sc.output_dir
    _prepare_out(out, args.force)
    outcome = simulate_run(vehicle, sc.road, sc.route, v_base, v_curve, condition,
                           sc.safety, sc.control, dt=sc.simulation["dt_s"],
                           settle_time=sc.simulation["settle_time_s"],
                           log_rate=sc.simulation["log_rate_hz"])
    _write_text(out / "trajectory.csv", _trajectory_text(outcome, sc.header_lines()))
    summary = {**sc.header_dict(), "vehicle": vehicle.name, "condition": condition.name,
               **outcome.summary()}
    _write_text(out / "outcome.json", _dumps_json(summary))
    print(f"{vehicle.name} {condition.name} v_base {v_base:g} mph, v_curve {v_curve:g} mph: "
          f"{outcome.verdict.value}" + (f" ({outcome.detail})" if outcome.detail else ""))
    return EXIT_OK if outcome.safe else EXIT_UNSAFE


def _pick(table, name, what):
    if name is None:
        return next(iter(table.values()))
    if name not in table:
        raise ConfigError(f"unknown {what} {name!r}; configured: {', '.join(table)}")
    return table[name]


def _search_cell(job):
    """One sweep cell; top-level so worker processes can run it."""
    vehicle, condition, road, route, search, kwargs = job
    try:
        return find_max_safe_speed(
            vehicle, road, route, condition, start=search["start_mph"],
            increment=search["increment_mph"], base_margin=search["base_margin_mph"],
            refine=search["refine_mph"] or None, probe=int(search["probe"]),
            ceiling=search["ceiling_mph"], **kwargs), None
    except (SearchFault, SimulationFault) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def cmd_sweep(sc: Scenario, args) -> int:
    from . import plots

    vehicles = args.vehicles.split(",") if args.vehicles else list(sc.vehicles)
    conditions = args.conditions.split(",") if args.conditions else sc.selected_conditions
    for v in vehicles:
        _pick(sc.vehicles, v, "vehicle")
    for c in conditions:
        _pick(sc.conditions, c, "condition")
    observed = load_observed(args.observed) if args.observed else {}
    out = Path(args.out) if args.out else sc.output_dir
    _prepare_out(out, args.force)

    spec = sc.road.spec
    aashto = aashto_design_speed(spec.radius, spec.superelevation_rate, sc.aashto_table)
    cells = [(v, c) for v in vehicles for c in conditions]
    jobs = [(sc.vehicles[v], sc.conditions[c], sc.road, sc.route, sc.search, _run_kwargs(sc))
            for v, c in cells]
    n_jobs = int(args.jobs or sc.search["jobs"])
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(n_jobs, len(jobs))) as pool:
            outcomes = list(pool.map(_search_cell, jobs))
    else:
        outcomes = [_search_cell(j) for j in jobs]

    header, hdict = sc.header_lines(), sc.header_dict()
    files, status, results = [], [], []

    def emit(name, text):
        _write_text(out / name, text)
        files.append(name)

    for (v, c), (result, error) in zip(cells, outcomes):
        status.append({"vehicle": v, "condition": c, "status": "failed" if error else "complete",
                       **({"error": error} if error else {})})
        if error:
            log.error("%s/%s: %s", v, c, error)
            print(f"{v:8s} {c:5s}  FAULT  {error}", file=sys.stderr)
            continue
        result.aashto_design_speed = aashto.speed
        result.observed_max_speed = observed.get((v, c))
        results.append(result)
        cell = f"{v}_{c}"
        emit(f"cells/{cell}.json", _dumps_json({
            **hdict, "vehicle": v, "condition": c,
            "max_safe_mph": result.max_safe_speed, "increment_mph": result.increment,
            "first_failing_mph": result.first_failing_speed, "failure_mode": result.failure_mode,
            "warning": result.warning,
            "tested": [{"v_curve_mph": s, "verdict": verdict} for s, verdict in result.tested],
            "boundary_runs": {k: o.summary() for k, o in result.boundary_runs.items()},
        }))
        for label, outcome in result.boundary_runs.items():
            emit(f"trajectories/{cell}_{label}.csv", _trajectory_text(outcome, header))
        print(f"{v:8s} {c:5s}  max safe {result.max_safe_speed:6.2f} mph  "
              f"(first failure {result.first_failing_speed:g} mph: {result.failure_mode})"
              + (f"  WARNING {result.warning}" if result.warning else ""))

    report = compare_report(results, aashto)
    buf = io.StringIO()
    report.write_csv(buf, header)
    emit("report.csv", buf.getvalue())
    emit("report.json", _dumps_json(report.to_dict({**hdict, "aashto": {
        "design_speed_mph": round(aashto.speed, 4), "rounded_mph": aashto.rounded,
        "iterations": aashto.iterations}})))
    emit("figure_data.csv", _figure_data(report.rows, aashto, header))
    if report.rows:
        plots.plot_speeds(report.rows, out / "speeds.png", aashto_mph=aashto.speed)
        files.append("speeds.png")
        if plots.plot_deviations(report.rows, out / "deviations.png"):
            files.append("deviations.png")
    complete = all(s["status"] == "complete" for s in status)
    _write_text(out / MANIFEST, _dumps_json({**hdict, "complete": complete, "cells": status,
                                              "files": sorted(files)}))
    print(f"AASHTO design speed {aashto.speed:.2f} mph (rounded {aashto.rounded} mph)")
    print(f"wrote {len(files) + 1} files to {out}" + ("" if complete else " (incomplete)"))
    return EXIT_OK if complete else EXIT_FAULT


def _figure_data(rows, aashto, header) -> str:
    """Plot-ready long table: one value per (vehicle, condition, series)."""
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    buf.write("# schema: figure-data/1\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("vehicle", "condition", "series", "speed_mph", "deviation_pct"))
    for r in rows:
        for series, speed, dev in (("simulated", r["simulated_max_safe_mph"], r["deviation_simulated_pct"]),
                                   ("aashto", round(aashto.speed, 4), r["deviation_aashto_pct"]),
                                   ("observed", r["observed_max_mph"], None)):
            if speed is None:
                continue
            w.writerow((r["vehicle"], r["condition"], series, f"{speed:.10g}",
                        "" if dev is None else f"{dev:.10g}"))
    return buf.getvalue()


def cmd_aashto(sc: Scenario | None, args) -> int:
    if args.radius is not None:
        radius = args.radius
    else:
        radius = sc.road.spec.radius
    e = args.e if args.e is not None else sc.road.spec.superelevation_rate
    if args.f_const is not None:
        table = AASHTOFrictionTable.constant(args.f_const)
    elif args.table:
        table = load_aashto_table(args.table)
    else:
        table = sc.aashto_table
    try:
        res = aashto_design_speed(radius, e, table)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.round:
        print(res.rounded)
    else:
        print(f"{res.speed:.2f}")
        print(f"rounded down to 5 mph: {res.rounded}")
    return EXIT_OK


def cmd_route_export(sc: Scenario, args) -> int:
    route = sc.route
    if args.offset_ft is not None or args.lane is not None:
        route = generate_route(sc.road, lane=args.lane or route.lane,
                               offset=units.ft_to_m(args.offset_ft) if args.offset_ft is not None
                               else route.centerline_offset,
                               spacing=route.spacing)
    header = [*sc.header_lines(), "schema: route/1"]
    if args.out:
        out = Path(args.out)
        _prepare_out(out, args.force)
        with open(out / "route.csv", "w", newline="") as fh:
            write_route_csv(route, fh, header)
        print(f"wrote {len(route)} waypoints to {out / 'route.csv'}")
    else:
        write_route_csv(route, sys.stdout, header)
    return EXIT_OK


# --- entry point -----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are config errors (exit 1), not "unsafe"
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    # Shared options are accepted before and after the subcommand; SUPPRESS
    # keeps a subparser from overwriting a value given at the top level.
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", metavar="PATH", help="scenario TOML (default: shipped scenario)")
    common.add_argument("--out", metavar="DIR", help="output directory (default: config output_dir)")
    common.add_argument("--force", action="store_true", help="write into a non-empty output directory")
    common.add_argument("--dump-config", action="store_true",
                        help="print the resolved config as TOML and exit")
    common.add_argument("-v", "--verbose", action="count")

    p = _Parser(prog="curvetwin", description=__doc__.split("\n\n")[0], parents=[common])
    p.add_argument("--version", action="version", version=f"curvetwin {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="one closed-loop run")
    s.add_argument("--vehicle", help="vehicle key from the config (default: first)")
    s.add_argument("--condition", help="surface condition (default: first selected)")
    s.add_argument("--v-curve", type=float, required=True, metavar="MPH")
    s.add_argument("--v-base", type=float, metavar="MPH", help="default: v_curve + base margin")

    w = sub.add_parser("sweep", parents=[common], help="maximum safe speed per vehicle and condition")
    w.add_argument("--vehicles", help="comma-separated vehicle keys (default: all)")
    w.add_argument("--conditions", help="comma-separated conditions (default: config list)")
    w.add_argument("--observed", metavar="PATH",
                   help="CSV with vehicle, condition, observed_max_mph")
    w.add_argument("--jobs", type=int, help="worker processes (default: config search.jobs)")

    a = sub.add_parser("aashto", parents=[common], help="AASHTO design speed for a curve")
    a.add_argument("--radius", type=float, metavar="FT", help="default: config curve")
    a.add_argument("--e", type=float, metavar="FT/FT", help="superelevation (default: config curve)")
    a.add_argument("--f-const", type=float, metavar="F", help="constant side friction factor")
    a.add_argument("--table", metavar="PATH", help="side friction table CSV")
    a.add_argument("--round", action="store_true", help="print only the 5 mph rounded value")

    r = sub.add_parser("route-export", parents=[common], help="write the waypoint CSV")
    r.add_argument("--lane", choices=("outer", "inner"))
    r.add_argument("--offset-ft", type=float, help="route offset from the lane centerline")
    return p


_COMMON_DEFAULTS = {"config": None, "out": None, "force": False, "dump_config": False, "verbose": 0}

COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "aashto": cmd_aashto,
            "route-export": cmd_route_export}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in _COMMON_DEFAULTS.items():
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.command and not args.dump_config:
        parser.print_help(sys.stderr)
        return EXIT_CONFIG
    try:
        sc = load_scenario(args.config)
        if args.dump_config:
            sys.stdout.write(dumps_toml(_toml_safe(sc.resolved)))
            return EXIT_OK
        return COMMANDS[args.command](sc, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SearchFault, SimulationFault) as exc:
        print(f"fault: {exc}", file=sys.stderr)
        return EXIT_FAULT
    except Exception:  # noqa: BLE001 - stable exit code for anything unexpected
        log.exception("internal fault")
        return EXIT_FAULT


def _toml_safe(obj):
    """TOML has no null: drop None values."""
    if isinstance(obj, dict):
        return {k: _toml_safe(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, (list, tuple)):
        return [_toml_safe(v) for v in obj if v is not None]
    return obj


if __name__ == "__main__":
    sys.exit(main())
