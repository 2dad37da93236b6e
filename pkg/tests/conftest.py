import pytest

from flatgen.feasibility import min_feasible_scale
from flatgen.maneuvers import BUILDERS, build_recipe
from flatgen.vehicle import nominal_params

RECIPE_NAMES = tuple(BUILDERS)


@pytest.fixture(scope="session")
def params():
    return nominal_params()


@pytest.fixture(scope="session")
def feasible_results(params):
    """Minimum-feasible-scale search for every built-in recipe, computed once."""
    return {name: min_feasible_scale(build_recipe(name), params) for name in RECIPE_NAMES}


@pytest.fixture(scope="session")
def loop_result(feasible_results):
    return feasible_results["loop"]


_VERDICTS = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""
    def record(number, title, ok, detail=""):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
        _VERDICTS.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
