import math

import numpy as np
import pytest

from flatgen.errors import DomainError, InfeasibleError
from flatgen.feasibility import (BISECT_TOL, SCAN_FACTOR, check_trajectory, circle_check,
                                 circle_max_speed, circle_samples, hover_to_hover_heatmap,
                                 knife_edge_speed_bound, min_feasible_scale, minimal_yaw_end,
                                 parallel_map, scan_grid, thread_count)
from flatgen.flatness import flat_to_full_batch
from flatgen.maneuvers import build_recipe, hover_to_hover
from flatgen.minsnap import MinSnapProblem, sample_times

REPORT_KEYS = {
    "feasible", "n_samples", "first_violation_time", "omega_low_margin", "omega_high_margin",
    "delta_margin", "negative_thrust_events", "degenerate_events", "near_limit", "peak_speed",
    "peak_load", "peak_rate", "reasons", "violating_samples",
}


def test_min_feasible_scale_is_tight(loop_result, params):
    r = loop_result
    assert r.report.feasible
    assert r.report.omega_low_margin >= 0 and r.report.omega_high_margin >= 0
    assert r.report.delta_margin >= 0
    recipe = build_recipe("loop")
    base = r.trajectory.durations / r.scale
    below = MinSnapProblem(recipe.waypoints).trajectory(base * r.scale * (1 - 2 * BISECT_TOL))
    assert not check_trajectory(below, params).feasible


def test_scan_profile_is_ordered_and_consistent(loop_result):
    scales = [c for c, _ in loop_result.profile]
    assert scales == sorted(scales)
    first_feasible = next(c for c, f in loop_result.profile if f)
    assert loop_result.scale <= first_feasible
    assert loop_result.scale > first_feasible / SCAN_FACTOR


def test_report_dict_has_fixed_fields(loop_result):
    d = loop_result.report.to_dict()
    assert set(d) == REPORT_KEYS
    assert d["violating_samples"] == []


def test_infeasible_trajectory_reports_first_violation(loop_result, params):
    recipe = build_recipe("loop")
    base = loop_result.trajectory.durations / loop_result.scale
    fast = MinSnapProblem(recipe.waypoints).trajectory(0.5 * base)
    rep = check_trajectory(fast, params)
    assert not rep.feasible
    assert rep.first_violation_time is not None
    assert rep.reasons
    assert rep.times[rep.to_dict()["violating_samples"][0]] == rep.first_violation_time


def test_no_feasible_scale_raises_with_profile(params):
    with pytest.raises(InfeasibleError) as info:
        min_feasible_scale(build_recipe("loop"), params, lo=0.1, hi=0.3)
    assert info.value.profile
    assert not any(f for _, f in info.value.profile)


def test_feasible_at_lower_bound_is_flagged(params):
    r = min_feasible_scale(hover_to_hover(6.0), params, lo=2.0, hi=4.0)
    assert r.at_lower_bound
    assert r.scale == 2.0


def test_check_trajectory_rejects_bad_dt(loop_result, params):
    with pytest.raises(DomainError):
        check_trajectory(loop_result.trajectory, params, dt=0.0)


def test_scan_grid_is_geometric():
    g = scan_grid(0.1, 10.0, 1.05)
    assert g[0] == pytest.approx(0.1) and g[-1] == pytest.approx(10.0)
    ratios = g[1:-1] / g[:-2]
    np.testing.assert_allclose(ratios, 1.05)


def test_loop_has_interior_infeasible_band(loop_result):
    assert loop_result.infeasible_bands()


@pytest.mark.parametrize("start, end, expected", [
    (0.0, 0.0, 0.0),
    (0.0, math.pi, math.pi),
    (0.0, -math.pi, math.pi),
    (math.pi, -math.pi, math.pi),
    (-math.pi, math.pi, -math.pi),
    (3.0, -3.0, 3.0 + (2 * math.pi - 6.0)),
    (-3.0, 3.0, -3.0 - (2 * math.pi - 6.0)),
])
def test_minimal_yaw_end(start, end, expected):
    assert minimal_yaw_end(start, end) == pytest.approx(expected)


def test_single_cell_heatmap_equals_direct_search(params):
    grid = hover_to_hover_heatmap([0.5], [-1.0], params)
    direct = min_feasible_scale(hover_to_hover(6.0, 0.5, -1.0), params).duration
    assert grid.shape == (1, 1)
    assert grid[0, 0] == direct


def test_parallel_map_matches_serial(monkeypatch):
    items = list(range(20))
    monkeypatch.setenv("FLATGEN_THREADS", "4")
    assert thread_count() == 4
    assert parallel_map(lambda x: x * x, items) == [x * x for x in items]
    monkeypatch.setenv("FLATGEN_THREADS", "0")
    assert thread_count() == 1
    monkeypatch.setenv("FLATGEN_THREADS", "not-a-number")
    with pytest.raises(DomainError):
        thread_count()


def test_threaded_search_is_deterministic(monkeypatch, params):
    recipe = build_recipe("hover_to_hover")
    serial = min_feasible_scale(recipe, params)
    monkeypatch.setenv("FLATGEN_THREADS", "4")
    threaded = min_feasible_scale(recipe, params)
    assert threaded.scale == serial.scale
    assert threaded.profile == serial.profile


@pytest.mark.parametrize("mode", ["coordinated", "knife_edge", "rolling"])
def test_circle_samples_are_consistent(mode):
    r, v = 3.0, 6.0
    t, s = circle_samples(r, v, mode, n=181)
    np.testing.assert_allclose(np.linalg.norm(s.x - [0, -r, 0], axis=-1), r)
    np.testing.assert_allclose(np.linalg.norm(s.v, axis=-1), v)
    np.testing.assert_allclose(np.linalg.norm(s.a, axis=-1), v * v / r)
    # numerical derivative of position along the samples matches velocity
    dt = t[1] - t[0]
    dx = (s.x[2:] - s.x[:-2]) / (2 * dt)
    np.testing.assert_allclose(dx, s.v[1:-1], atol=v * 1e-3)


def test_coordinated_circle_has_no_sideslip(params):
    t, s = circle_samples(3.0, 6.0, "coordinated", n=37)
    full = flat_to_full_batch(s, params)
    assert np.max(np.abs(full.v_alpha[:, 1])) < 1e-9


def test_circle_speed_search(params):
    v = circle_max_speed(3.0, "coordinated", params)
    assert circle_check(3.0, v, "coordinated", params).feasible
    assert not circle_check(3.0, v + 2e-3, "coordinated", params).feasible


def test_knife_edge_bound_formula(params):
    assert knife_edge_speed_bound(3.0, params) == pytest.approx(9.5, rel=1e-5)
    assert knife_edge_speed_bound(12.0, params) == pytest.approx(19.0, rel=1e-5)
    with pytest.raises(DomainError):
        knife_edge_speed_bound(0.0, params)


def test_circle_argument_validation(params):
    with pytest.raises(DomainError):
        circle_samples(3.0, 5.0, "sideways")
    with pytest.raises(DomainError):
        circle_samples(-1.0, 5.0, "coordinated")


def test_all_recipes_have_a_feasible_scale(feasible_results):
    for name, r in feasible_results.items():
        assert r.report.feasible, name
        assert r.report.degenerate_events == 0, name


def test_samples_checked_every_dt(loop_result, params):
    rep = check_trajectory(loop_result.trajectory, params, dt=0.01)
    np.testing.assert_array_equal(rep.times, sample_times(loop_result.duration, 0.01))
    assert rep.times[-1] == pytest.approx(loop_result.duration)
