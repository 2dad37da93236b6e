import csv
import io
import json

import numpy as np
import pytest

from flatgen.errors import DomainError
from flatgen.export import (TRACE_COLUMNS, TRAJECTORY_COLUMNS, heatmap_csv, load_trajectory,
                            read_heatmap_csv, report_json, trace_csv, trajectory_csv,
                            trajectory_json, write_text)
from flatgen.minsnap import sample_flat_batch
from flatgen.simulator import reference_trace


def _table(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.reader(lines))


def test_trajectory_json_reloads_exactly(loop_result, tmp_path):
    traj = loop_result.trajectory
    path = tmp_path / "traj.json"
    write_text(path, trajectory_json(traj))
    back = load_trajectory(path)
    np.testing.assert_array_equal(back.durations, traj.durations)
    np.testing.assert_array_equal(back.coeffs, traj.coeffs)
    t = np.linspace(0, traj.duration, 57)
    np.testing.assert_array_equal(sample_flat_batch(back, t).x, sample_flat_batch(traj, t).x)


def test_trajectory_json_states_frame_and_basis(loop_result):
    d = json.loads(trajectory_json(loop_result.trajectory))
    assert "z down" in d["frame"]
    assert d["channels"] == ["x", "y", "z", "psi"]
    assert d["boundaries"][-1] == pytest.approx(loop_result.duration)


@pytest.mark.parametrize("payload", ['{"durations": [1.0]}', "[1, 2]", "{not json",
                                     '{"durations": [1.0], "coefficients": [[1, 2], [3]]}'])
def test_bad_trajectory_json_is_a_domain_error(payload, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(payload)
    with pytest.raises(DomainError):
        load_trajectory(path)


def test_trajectory_csv_columns(loop_result):
    text = trajectory_csv(loop_result.trajectory, dt=0.01)
    assert text.startswith("# ")
    rows = _table(text)
    assert tuple(rows[0]) == TRAJECTORY_COLUMNS
    data = np.array(rows[1:], dtype=float)
    assert data[0, 0] == 0.0
    assert data[-1, 0] == pytest.approx(loop_result.duration)
    # printed times carry ten significant digits and may land just past T
    s = sample_flat_batch(loop_result.trajectory, np.clip(data[:, 0], 0, loop_result.duration))
    np.testing.assert_allclose(data[:, 1:4], s.x, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(data[:, 9:12], s.a, rtol=1e-9, atol=1e-8)


def test_heatmap_csv_round_trip():
    axis = np.linspace(-np.pi, np.pi, 3)
    values = np.array([[1.5, 2.0, np.nan], [1.25, 1.0, 1.75], [2.5, np.nan, 3.0]])
    text = heatmap_csv(axis, axis, values)
    assert _table(text)[0][0] == "psi_start\\psi_end"
    ps, pe, back = read_heatmap_csv(text)
    np.testing.assert_allclose(ps, axis, rtol=1e-9)
    np.testing.assert_allclose(pe, axis, rtol=1e-9)
    np.testing.assert_array_equal(np.isnan(back), np.isnan(values))
    np.testing.assert_allclose(back[~np.isnan(back)], values[~np.isnan(values)])


def test_trace_csv_header_and_rows(loop_result, params):
    trace = reference_trace(loop_result.trajectory, params, dt=0.05)
    text = trace_csv(trace)
    comments = [ln for ln in text.splitlines() if ln.startswith("#")]
    assert any("mode=consistent" in c for c in comments)
    rows = _table(text)
    assert tuple(rows[0]) == TRACE_COLUMNS
    assert len(rows) - 1 == len(trace)
    assert all(len(r) == len(TRACE_COLUMNS) for r in rows[1:])


def test_report_json_is_sorted_and_merges_extra(loop_result):
    d = json.loads(report_json(loop_result.report, {"scale": loop_result.scale}))
    assert d["scale"] == loop_result.scale
    text = report_json(loop_result.report)
    assert list(json.loads(text)) == sorted(json.loads(text))
    assert text == report_json(loop_result.report)


def test_csv_output_is_plain_text(loop_result):
    text = trajectory_csv(loop_result.trajectory, dt=0.5)
    assert "\r" not in text
    assert len(io.StringIO(text).readlines()) == len(text.splitlines())
