import json
import subprocess
import sys

import pytest

from flatgen.cli import EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE, main
from flatgen.export import read_heatmap_csv, trajectory_json
from flatgen.feasibility import min_feasible_scale
from flatgen.maneuvers import hover_to_hover
from flatgen.vehicle import nominal_params_path


@pytest.fixture(scope="module")
def loop_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("loop")
    assert main(["generate", "--maneuver", "loop", "--out", str(out)]) == EXIT_OK
    return out


def test_generate_writes_artifacts(loop_dir, loop_result):
    names = {p.name for p in loop_dir.iterdir()}
    assert names == {"loop_trajectory.csv", "loop_trajectory.json", "loop_report.json"}
    report = json.loads((loop_dir / "loop_report.json").read_text())
    assert report["feasible"] is True
    assert report["duration"] == pytest.approx(loop_result.duration)
    assert report["infeasible_bands"]
    assert report["scan_profile"][0][0] == pytest.approx(0.1)


def test_generate_is_byte_identical(loop_dir, tmp_path):
    assert main(["generate", "--maneuver", "loop", "--out", str(tmp_path)]) == EXIT_OK
    for name in ("loop_trajectory.csv", "loop_trajectory.json", "loop_report.json"):
        assert (tmp_path / name).read_bytes() == (loop_dir / name).read_bytes()


def test_generate_hover_to_hover_half_turn(tmp_path):
    args = ["generate", "--maneuver", "hover_to_hover", "--dist", "6", "--psi-end", "3.14159",
            "--out", str(tmp_path)]
    assert main(args) == EXIT_OK
    report = json.loads((tmp_path / "hover_to_hover_report.json").read_text())
    assert report["feasible"]
    assert 1.5 < report["duration"] < 4.0


def test_generate_from_recipe_file(tmp_path):
    recipe = tmp_path / "hop.json"
    recipe.write_text(hover_to_hover(4.0, 0.0, 0.5).to_json())
    assert main(["generate", "--recipe", str(recipe), "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "hover_to_hover_report.json").is_file()


def test_generate_circle(tmp_path):
    base = ["generate", "--maneuver", "circle", "--radius", "3", "--out", str(tmp_path)]
    assert main(base + ["--speed", "6"]) == EXIT_OK
    assert json.loads((tmp_path / "circle_report.json").read_text())["feasible"]
    assert main(base + ["--speed", "12", "--circle-mode", "rolling"]) == EXIT_INFEASIBLE


def test_generate_infeasible_everywhere(tmp_path):
    args = ["generate", "--maneuver", "loop", "--scan-lo", "0.1", "--scan-hi", "0.3",
            "--out", str(tmp_path)]
    assert main(args) == EXIT_INFEASIBLE
    report = json.loads((tmp_path / "loop_report.json").read_text())
    assert report["feasible"] is False
    assert report["scan_profile"] and not any(f for _, f in report["scan_profile"])


def test_missing_params_names_the_path(tmp_path, capsys):
    missing = tmp_path / "nowhere.params"
    rc = main(["generate", "--maneuver", "loop", "--params", str(missing), "--out", str(tmp_path)])
    assert rc == EXIT_USAGE
    assert str(missing) in capsys.readouterr().err


def test_params_file_is_used(tmp_path, capsys):
    params = tmp_path / "vehicle.params"
    params.write_text(nominal_params_path().read_text())
    out = tmp_path / "out"
    assert main(["check", str(tmp_path / "missing.json"), "--params", str(params)]) == EXIT_USAGE
    assert main(["generate", "--maneuver", "hover_to_hover", "--params", str(params),
                 "--out", str(out)]) == EXIT_OK


@pytest.mark.parametrize("argv", [[], ["fly"], ["generate"], ["generate", "--maneuver", "barrel"],
                                  ["heatmap", "--grid", "0"], ["simulate"],
                                  ["generate", "--maneuver", "loop", "--dt", "fast"]])
def test_usage_errors(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == EXIT_USAGE


def test_check_feasible_file(loop_dir, capsys):
    assert main(["check", str(loop_dir / "loop_trajectory.json")]) == EXIT_OK
    out = capsys.readouterr().out
    assert json.loads(out[:out.rindex("}") + 1])["feasible"] is True


def test_check_hand_edited_file(loop_dir, tmp_path, capsys):
    data = json.loads((loop_dir / "loop_trajectory.json").read_text())
    data["durations"] = [0.5 * d for d in data["durations"]]
    edited = tmp_path / "fast.json"
    edited.write_text(json.dumps(data))
    assert main(["check", str(edited), "--out", str(tmp_path)]) == EXIT_INFEASIBLE
    assert "first violation at t=" in capsys.readouterr().out
    report = json.loads((tmp_path / "check_report.json").read_text())
    assert report["first_violation_time"] is not None
    first = (tmp_path / "check_report.json").read_bytes()
    assert main(["check", str(edited), "--out", str(tmp_path)]) == EXIT_INFEASIBLE
    assert (tmp_path / "check_report.json").read_bytes() == first


def test_check_rejects_broken_json(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    assert main(["check", str(broken)]) == EXIT_USAGE


def test_single_cell_heatmap(tmp_path, params):
    args = ["heatmap", "--grid", "1", "--psi-start", "0.5", "--psi-end", "-1", "--out", str(tmp_path)]
    assert main(args) == EXIT_OK
    ps, pe, values = read_heatmap_csv((tmp_path / "heatmap.csv").read_text())
    direct = min_feasible_scale(hover_to_hover(6.0, 0.5, -1.0), params).duration
    assert values.shape == (1, 1)
    assert values[0, 0] == pytest.approx(direct, rel=1e-9)


def test_sweep_orders_circle_modes(tmp_path):
    assert main(["sweep", "--radius", "3", "--out", str(tmp_path)]) == EXIT_OK
    lines = (tmp_path / "circle_sweep.csv").read_text().splitlines()
    assert lines[1] == "radius,coordinated,knife_edge,rolling,knife_edge_bound"
    r, coordinated, knife, rolling, bound = map(float, lines[2].split(","))
    assert coordinated > knife > rolling
    assert knife <= bound


def test_export_samples_trajectory(loop_dir, tmp_path):
    args = ["export", str(loop_dir / "loop_trajectory.json"), "--out", str(tmp_path)]
    assert main(args) == EXIT_OK
    assert (tmp_path / "loop_trajectory.csv").read_bytes() == (loop_dir / "loop_trajectory.csv").read_bytes()


def test_simulate_modes(feasible_results, tmp_path):
    traj_file = tmp_path / "knife.json"
    traj_file.write_text(trajectory_json(feasible_results["knife_edge"].trajectory))
    errors = {}
    for mode in ("consistent", "full"):
        out = tmp_path / mode
        args = ["simulate", str(traj_file), "--mode", mode, "--step", "2e-3", "--out", str(out)]
        assert main(args) == EXIT_OK
        metrics = json.loads((out / "metrics.json").read_text())
        for key in ("max_position_error", "rms_position_error", "max_speed", "max_load", "max_angular_rate",
                    "max_residual_trans", "quat_drift", "windowed"):
            assert key in metrics
        errors[mode] = metrics["windowed"]["max_position_error"]
        assert (out / "trace.csv").read_text().startswith("# ")
    assert metrics["max_residual_trans"] > 0
    assert errors["full"] > 100 * errors["consistent"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "flatgen", "generate", "--maneuver", "bogus"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == EXIT_USAGE
    assert "invalid choice" in proc.stderr
