import numpy as np
import pytest

from flatgen.errors import DomainError, SimulationDiverged
from flatgen.maneuvers import hover_to_hover
from flatgen.minsnap import solve_min_snap
from flatgen.simulator import (SimConfig, attitude_error, integrate_open_loop, reference,
                               reference_trace, tracking_metrics, windowed_round_trip)


@pytest.fixture(scope="module")
def hover_traj():
    wps = hover_to_hover(0.0, 0.3, 0.3).waypoints
    return solve_min_snap(wps, [1.0])


def test_config_validation():
    with pytest.raises(DomainError):
        SimConfig(step=0.0)
    with pytest.raises(DomainError):
        SimConfig(step=0.1, window=0.05)
    with pytest.raises(DomainError):
        SimConfig(mode="closed_loop")
    assert SimConfig(mode="full_model").mode == "full"
    assert SimConfig(mode="flatness_consistent").consistent


def test_hover_stays_put(hover_traj, params):
    trace = integrate_open_loop(hover_traj, params, SimConfig(step=1e-4))
    assert trace.t[-1] == pytest.approx(1.0)
    drift = np.linalg.norm(trace.states[:, 0:3] - trace.states[0, 0:3], axis=-1)
    assert drift.max() < 1e-6
    assert trace.quat_drift < 1e-12


def test_trace_grid_is_uniform(hover_traj, params):
    trace = integrate_open_loop(hover_traj, params, SimConfig(step=3e-3))
    np.testing.assert_allclose(np.diff(trace.t), 3e-3, rtol=1e-9)
    assert trace.states.shape == (len(trace), 13)
    assert trace.inputs.shape == (len(trace), 4)
    np.testing.assert_allclose(np.linalg.norm(trace.states[:, 6:10], axis=-1), 1.0, atol=1e-14)


def test_loop_windowed_round_trip(loop_result, params):
    result = windowed_round_trip(loop_result.trajectory, params, SimConfig(step=1e-4))
    assert len(result.windows) == int(np.ceil(loop_result.duration / 0.5))
    assert result.max_position_error < 1e-3
    assert result.max_attitude_error < 1e-3
    trace = result.trace
    np.testing.assert_allclose(np.diff(trace.t), 1e-4, rtol=1e-6)


def _segment_interior_error(traj, params, t0, length, n):
    h = length / n
    trace = integrate_open_loop(traj, params, SimConfig(step=h, window=h), t0, t0 + length)
    samples, _ = reference(traj, params, trace.t[-1:])
    return np.linalg.norm(trace.states[-1, 0:3] - samples.x[0])


def test_integrator_is_fourth_order(loop_result, params):
    # stay inside one polynomial segment: inputs are only C0 at the boundaries
    traj = loop_result.trajectory
    t0 = traj.boundaries[0] + 0.01
    errors = [_segment_interior_error(traj, params, t0, 0.3, n) for n in (16, 32, 64)]
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(orders > 3.7)


def test_full_model_drifts_more_than_consistent(feasible_results, params):
    traj = feasible_results["knife_edge"].trajectory
    cons = windowed_round_trip(traj, params, SimConfig(step=2e-3, mode="consistent"))
    full = windowed_round_trip(traj, params, SimConfig(step=2e-3, mode="full"))
    assert full.max_position_error > 100 * cons.max_position_error
    assert all(w.position >= 0 for w in full.windows)


def test_consistent_mode_residuals(loop_result, params):
    trace = integrate_open_loop(loop_result.trajectory, params, SimConfig(step=1e-2))
    assert trace.res_trans.max() < 1e-9
    assert trace.res_rot.max() < 1e-8
    full = integrate_open_loop(loop_result.trajectory, params, SimConfig(step=1e-2, mode="full"))
    assert full.res_trans.max() > 1e-3


def test_reference_trace_tracks_perfectly(loop_result, params):
    trace = reference_trace(loop_result.trajectory, params)
    m = tracking_metrics(trace, loop_result.trajectory, params)
    assert m.max_error == 0.0 and m.rms_error == 0.0
    assert m.max_speed == pytest.approx(loop_result.report.peak_speed)
    assert m.max_load == pytest.approx(loop_result.report.peak_load)
    assert m.max_rate == pytest.approx(loop_result.report.peak_rate)
    row = m.table_row("loop")
    assert row.startswith("loop: ") and row.count("/") == 4


def test_rms_never_exceeds_max(loop_result, params):
    trace = windowed_round_trip(loop_result.trajectory, params, SimConfig(step=5e-3, mode="full")).trace
    m = tracking_metrics(trace, loop_result.trajectory, params)
    assert 0 < m.rms_error <= m.max_error


def test_metrics_reject_bad_grids(loop_result, params):
    trace = reference_trace(loop_result.trajectory, params, dt=0.01)
    bent = trace.truncated(len(trace))
    bent.t = bent.t.copy()
    bent.t[5] += 1e-3
    with pytest.raises(DomainError):
        tracking_metrics(bent, loop_result.trajectory, params)
    late = trace.truncated(len(trace))
    late.t = late.t + 1.0
    with pytest.raises(DomainError):
        tracking_metrics(late, loop_result.trajectory, params)


def test_divergence_aborts_with_partial_trace(hover_traj, params):
    # a wildly wrong start state falls far away within the horizon
    y0 = np.zeros(13)
    y0[3:6] = [0.0, 0.0, 5e3]
    y0[6] = 1.0
    with pytest.raises(SimulationDiverged) as info:
        integrate_open_loop(hover_traj, params, SimConfig(step=1e-3), y0=y0)
    trace = info.value.trace
    assert 1 < len(trace) < 1001
    assert np.linalg.norm(trace.states[-1, 0:3]) > 1e3


def test_attitude_error_ignores_quaternion_sign():
    q = np.array([[0.5, 0.5, 0.5, 0.5]])
    assert attitude_error(q, -q)[0] == pytest.approx(0.0, abs=1e-7)
    r = np.array([[np.cos(0.1), np.sin(0.1), 0.0, 0.0]])
    assert attitude_error(np.array([[1.0, 0, 0, 0]]), r)[0] == pytest.approx(0.2)
