import math

import numpy as np
import pytest

from flatgen.errors import DomainError
from flatgen.maneuvers import (BUILDERS, COURSE_GATES, MANEUVER_NAMES, CircleRecipe,
                               ManeuverRecipe, build_recipe, hover_to_hover, race_recipe)


@pytest.mark.parametrize("name", sorted(BUILDERS))
def test_recipe_json_round_trip(name):
    recipe = build_recipe(name)
    again = ManeuverRecipe.from_json(recipe.to_json())
    assert again.to_json() == recipe.to_json()
    assert again.yaws == recipe.yaws


@pytest.mark.parametrize("name", sorted(BUILDERS))
def test_recipes_start_and_end_at_rest(name):
    wps = build_recipe(name).waypoints
    for wp in (wps[0], wps[-1]):
        np.testing.assert_array_equal(wp.velocity, 0.0)
        assert wp.yaw_rate == 0.0


def test_unknown_maneuver():
    with pytest.raises(DomainError, match="unknown maneuver"):
        build_recipe("barrel_roll")
    with pytest.raises(DomainError, match="bad parameters"):
        build_recipe("loop", wingspan=3)


def test_circle_is_a_maneuver_name():
    assert "circle" in MANEUVER_NAMES
    c = build_recipe("circle", r=3.0, v=5.0, mode="rolling")
    assert isinstance(c, CircleRecipe)
    with pytest.raises(DomainError):
        CircleRecipe(3.0, 5.0, "upside_down")


def test_climbing_turn_geometry():
    wps = build_recipe("climbing_turn").waypoints
    assert len(wps) == 4
    a, b = wps[1], wps[2]
    np.testing.assert_allclose(b.position - a.position, [0, 0, -1.0])  # 1 m climb, z down
    assert b.yaw - a.yaw == pytest.approx(1.5 * math.pi)


def test_knife_edge_holds_quarter_turn_yaw():
    yaws = build_recipe("knife_edge").yaws
    assert max(yaws) == pytest.approx(math.pi / 2)
    assert yaws[0] == yaws[-1] == 0.0


def test_loop_waypoints_lie_on_the_circle():
    wps = build_recipe("loop").waypoints[1:-1]
    center = np.array([0.0, 0.0, -1.0])
    for wp in wps:
        assert np.linalg.norm(wp.position - center) == pytest.approx(1.0)
        assert abs((wp.position - center) @ wp.velocity_direction) < 1e-12


def test_hover_to_hover_yaw_choice():
    r = hover_to_hover(6.0, 3.0, -3.0)
    assert r.yaws[1] - r.yaws[0] == pytest.approx(2 * math.pi - 6.0)
    r = hover_to_hover(6.0, 3.0, -3.0, minimal=False)
    assert r.yaws[1] == -3.0
    with pytest.raises(DomainError):
        hover_to_hover(-1.0)


def test_race_gate_yaws():
    recipe = race_recipe(COURSE_GATES)
    gates = recipe.waypoints[1:-1]
    assert len(gates) == len(COURSE_GATES)
    for wp, (_, normal, mode) in zip(gates, COURSE_GATES):
        heading = math.atan2(normal[1], normal[0]) + (math.pi / 2 if mode == "knife_edge" else 0)
        assert math.remainder(wp.yaw - heading, 2 * math.pi) == pytest.approx(0.0, abs=1e-12)
    # yaw unwraps to the nearest equivalent angle between gates
    assert np.all(np.abs(np.diff(recipe.yaws)) <= math.pi + 1e-12)


def test_race_input_validation():
    with pytest.raises(DomainError):
        race_recipe([])
    with pytest.raises(DomainError):
        race_recipe([((1, 0, 0), (0, 0, 0), "coordinated")])
    with pytest.raises(DomainError):
        race_recipe([((1, 0, 0), (1, 0, 0), "inverted")])


def test_recipe_validation():
    wps = build_recipe("loop").waypoints
    with pytest.raises(DomainError):
        ManeuverRecipe("x", wps[:1])
    with pytest.raises(DomainError):
        ManeuverRecipe("x", wps, durations=[1.0])
    with pytest.raises(DomainError):
        ManeuverRecipe.from_dict({"name": "x"})
    with pytest.raises(DomainError):
        ManeuverRecipe.from_dict({"waypoints": [], "colour": "red"})
    with pytest.raises(DomainError):
        ManeuverRecipe.from_json("{not json")
