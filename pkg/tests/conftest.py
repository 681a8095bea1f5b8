from pathlib import Path

import pytest

from curvetwin.dynamics import load_vehicle
from curvetwin.geometry import CurveSpec, build_road, generate_route

DATA = Path(__file__).resolve().parents[1] / "src" / "curvetwin" / "data"

# Acceptance outcomes, filled by tests/test_acceptance.py and printed at the end.
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def road():
    return build_road(CurveSpec())


@pytest.fixture(scope="session")
def route(road):
    return generate_route(road)


@pytest.fixture(scope="session")
def vehicles():
    return {n: load_vehicle(DATA / "vehicles" / f"{n}.toml") for n in ("sedan", "suv", "pickup")}


@pytest.fixture(scope="session")
def sedan(vehicles):
    return vehicles["sedan"]


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, text = ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {number:2d}: {text}")
