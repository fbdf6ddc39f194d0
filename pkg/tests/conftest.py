from pathlib import Path

import numpy as np
import pytest

from swarmgoal.worldmodel import AgentState, GoalTrajectory, load_scenario

GOLDEN = Path(__file__).resolve().parents[1] / "src" / "swarmgoal" / "scenarios" / "golden.yaml"

# goal velocity (0.05t^3 - 0.3t^2 + 0.45t, 0.02t + 0.05), integrated
FORMATION_TAIL = [[0.0, 0.05], [0.225, 0.01], [-0.1, 0.0], [0.0125, 0.0]]


@pytest.fixture(scope="session")
def golden_cfg():
    return load_scenario(GOLDEN)


@pytest.fixture
def rest_origin():
    return AgentState(1, (0.0, 0.0), (0.0, 0.0))


@pytest.fixture
def parabola_goal():
    """p*(t) = (1 + t^2, 0)."""
    return GoalTrajectory(1, [[1.0, 0.0], [0.0, 0.0], [1.0, 0.0]])


def random_instance(rng, degree=None):
    """Random agent state and goal polynomial (degree 2..4 unless given)."""
    eta = int(rng.integers(2, 5)) if degree is None else degree
    coeffs = rng.normal(size=(eta + 1, 2))
    coeffs[1:] *= rng.uniform(0.05, 1.0, size=(eta, 1)) / np.arange(1, eta + 1)[:, None] ** 2
    st = AgentState(1, rng.uniform(-3, 3, 2), rng.uniform(-0.5, 0.5, 2))
    return st, GoalTrajectory(1, coeffs)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("tests.test_acceptance")
    lines = mod.report_lines() if mod else []
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
