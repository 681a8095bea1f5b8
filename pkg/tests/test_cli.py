import csv
import json

import pytest

from curvetwin import cli
from curvetwin.config import loads_toml

SMALL = """
output_dir = "out"
[curve]
file = "curve_study.toml"
[vehicles]
sedan = "vehicles/sedan.toml"
[surfaces]
conditions = ["dry"]
[search]
start_mph = 60.0
increment_mph = 2.0
"""


@pytest.fixture
def small(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return p


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def test_aashto_command(capsys):
    assert cli.main(["aashto", "--radius", "500", "--e", "0", "--f-const", "0.15"]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "33.54"
    assert cli.main(["aashto"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "48.57" and out[1].endswith("45")
    assert cli.main(["aashto", "--round"]) == 0
    assert int(capsys.readouterr().out) % 5 == 0


def test_aashto_out_of_range_e(capsys):
    assert cli.main(["aashto", "--e", "0.2"]) == 1
    assert "superelevation" in capsys.readouterr().err


def test_usage_error_is_exit_1():
    with pytest.raises(SystemExit) as exc:
        cli.main(["simulate"])  # --v-curve missing
    assert exc.value.code == 1


def test_missing_vehicle_file(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text('[vehicles]\nghost = "nowhere/ghost.toml"\n')
    assert cli.main(["--config", str(cfg), "simulate", "--v-curve", "15"]) == 1
    assert "nowhere/ghost.toml" in capsys.readouterr().err


def test_malformed_config_names_the_line(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[search]\nstart_mph = = 3\n")
    assert cli.main(["--config", str(cfg), "aashto"]) == 1
    assert "line 2" in capsys.readouterr().err


def test_unknown_key_is_reported(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[search]\nstart_speed = 3\n")
    assert cli.main(["--config", str(cfg), "aashto"]) == 1
    assert "start_speed" in capsys.readouterr().err


def test_simulate_safe_and_unsafe(tmp_path):
    assert cli.main(["simulate", "--v-curve", "15", "--out", str(tmp_path / "a")]) == 0
    summary = json.loads((tmp_path / "a" / "outcome.json").read_text())
    assert summary["verdict"] == "safe" and summary["v_base_mph"] == 20.0
    lines = (tmp_path / "a" / "trajectory.csv").read_text().splitlines()
    assert lines[0].startswith("# curvetwin ") and lines[1].startswith("# config_hash: ")
    assert lines[2].startswith("# units: ")

    assert cli.main(["simulate", "--v-curve", "120", "--out", str(tmp_path / "b")]) == 2
    summary = json.loads((tmp_path / "b" / "outcome.json").read_text())
    assert summary["verdict"] != "safe" and summary["detail"]


def test_output_dir_needs_force(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["simulate", "--v-curve", "15", "--out", str(out)]) == 0
    assert cli.main(["simulate", "--v-curve", "15", "--out", str(out)]) == 1
    assert cli.main(["simulate", "--v-curve", "15", "--out", str(out), "--force"]) == 0


def test_route_export(tmp_path, capsys):
    assert cli.main(["route-export", "--out", str(tmp_path / "r")]) == 0
    rows = _rows(tmp_path / "r" / "route.csv")
    assert float(rows[0]["station_ft"]) == 0.0
    assert {r["offset_ft"] for r in rows} == {"1.25"}
    capsys.readouterr()
    assert cli.main(["route-export", "--offset-ft", "0"]) == 0
    text = capsys.readouterr().out
    rows = list(csv.DictReader(l for l in text.splitlines() if not l.startswith("#")))
    assert {r["offset_ft"] for r in rows} == {"0.0"}


def test_reimported_route_reproduces_the_run(tmp_path):
    """A run on the exported-then-imported route matches the generated-route run."""
    assert cli.main(["route-export", "--out", str(tmp_path / "r")]) == 0
    cfg = tmp_path / "c.toml"
    cfg.write_text(f'[route]\nfile = "{tmp_path / "r" / "route.csv"}"\n')
    assert cli.main(["simulate", "--v-curve", "30", "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["--config", str(cfg), "simulate", "--v-curve", "30", "--out", str(tmp_path / "b")]) == 0
    a = _rows(tmp_path / "a" / "trajectory.csv")
    b = _rows(tmp_path / "b" / "trajectory.csv")
    assert len(a) == len(b)
    for ra, rb in zip(a, b):
        assert ra["phase"] == rb["phase"]
        for key in ("t_s", "station_ft", "x_ft", "y_ft", "speed_mph", "steer_deg"):
            assert float(ra[key]) == pytest.approx(float(rb[key]), rel=1e-6, abs=1e-6)


def test_dump_config_round_trips(capsys, small):
    assert cli.main(["--config", str(small), "--dump-config"]) == 0
    data = loads_toml(capsys.readouterr().out)
    assert data["search"]["start_mph"] == 60.0
    assert list(data["vehicles"]) == ["sedan"]
    assert data["surfaces"]["conditions"] == ["dry"]


def test_sweep_outputs(tmp_path, small):
    obs = tmp_path / "obs.csv"
    obs.write_text("vehicle,condition,observed_max_mph\nsedan,dry,60\n")
    out = tmp_path / "s"
    assert cli.main(["--config", str(small), "sweep", "--out", str(out), "--observed", str(obs)]) == 0
    rows = _rows(out / "report.csv")
    assert len(rows) == 1
    row = rows[0]
    assert row["vehicle"] == "sedan" and row["condition"] == "dry"
    assert float(row["first_failing_mph"]) - float(row["simulated_max_safe_mph"]) == 2.0
    assert row["deviation_simulated_pct"] != "" and row["deviation_aashto_pct"] != ""
    manifest = json.loads((out / "MANIFEST.json").read_text())
    assert manifest["complete"] is True
    for name in manifest["files"]:
        assert (out / name).exists()
    assert "speeds.png" in manifest["files"] and "deviations.png" in manifest["files"]
    assert (out / "trajectories" / "sedan_dry_first_failing.csv").exists()
    # refuses to reuse the directory without --force
    assert cli.main(["--config", str(small), "sweep", "--out", str(out)]) == 1


def test_sweep_fault_keeps_partial_results(tmp_path, small):
    cfg = tmp_path / "bad.toml"
    cfg.write_text(SMALL.replace("start_mph = 60.0", "start_mph = 110.0"))
    out = tmp_path / "s"
    assert cli.main(["--config", str(cfg), "sweep", "--out", str(out)]) == 3
    manifest = json.loads((out / "MANIFEST.json").read_text())
    assert manifest["complete"] is False
    assert manifest["cells"][0]["status"] == "failed"
    assert "start speed" in manifest["cells"][0]["error"]
    assert _rows(out / "report.csv") == []


def test_observed_file_errors(tmp_path, small):
    bad = tmp_path / "obs.csv"
    bad.write_text("vehicle,condition,speed\nsedan,dry,60\n")
    assert cli.main(["--config", str(small), "sweep", "--out", str(tmp_path / "s"),
                     "--observed", str(bad)]) == 1
