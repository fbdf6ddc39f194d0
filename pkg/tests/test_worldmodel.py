import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmgoal.errors import ScenarioParseError, ScenarioValidationError, UnknownAgentError
from swarmgoal.worldmodel import (
    AgentState,
    GoalTrajectory,
    ScenarioConfig,
    distance,
    dump_scenario,
    eval_goal,
    goals_from_velocity,
    load_scenario,
    neighborhood,
    shift_coeffs,
)

from .conftest import FORMATION_TAIL

finite = st.floats(-10, 10, allow_nan=False)


def test_eval_goal_at_zero_returns_leading_coeffs():
    g = GoalTrajectory(1, [[1, 0], [0, 0], [1, 0]])
    p, v = eval_goal(g, 0.0)
    assert p.tolist() == [1.0, 0.0]
    assert v.tolist() == [0.0, 0.0]


def test_eval_goal_at_two():
    g = GoalTrajectory(1, [[1, 0], [0, 0], [1, 0]])
    p, v = eval_goal(g, 2.0)
    assert p.tolist() == [5.0, 0.0]
    assert v.tolist() == [4.0, 0.0]


def test_formation_goal_velocity_at_one():
    g = GoalTrajectory(1, [[0.0, 0.0]] + FORMATION_TAIL)
    _, v = eval_goal(g, 1.0)
    assert v == pytest.approx([0.2, 0.07], abs=1e-15)


def test_goals_from_velocity_matches_integrated_tail():
    goals = goals_from_velocity([(0, 0), (1, 2)], [[0, 0.05], [0.45, 0.02], [-0.3, 0], [0.05, 0]])
    np.testing.assert_allclose(goals[1].coeffs[1:], FORMATION_TAIL, atol=1e-15)
    assert goals[1].coeffs[0].tolist() == [1.0, 2.0]


def test_eval_goal_rejects_negative_time():
    with pytest.raises(ValueError):
        eval_goal(GoalTrajectory(1, [[0, 0], [0, 0], [1, 1]]), -1.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=3, max_size=6), st.floats(0, 5))
def test_velocity_matches_central_difference(coeffs, t):
    g = GoalTrajectory(1, coeffs)
    step = 1e-6
    fd = (g.position(t + step) - g.position(t - step)) / (2 * step) if t >= step else (
        g.position(t + step) - g.position(t)) / step
    v = g.velocity(t)
    # roundoff of the difference quotient ~ eps * |p| / step
    scale = 1e-6 * (1 + np.abs(v)) + 1e-9 * (1 + np.abs(g.position(t)))
    if t < step:
        scale = scale + 1e-5 * (1 + np.abs(g.acceleration(t)))
    assert np.all(np.abs(fd - v) <= scale)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=6), st.floats(-3, 3), st.floats(0, 3))
def test_shift_coeffs_reproduces_time_offset(coeffs, t0, tau):
    c = np.array(coeffs, dtype=float)
    shifted = shift_coeffs(c, t0)
    direct = np.polynomial.polynomial.polyval(t0 + tau, c)
    rebased = np.polynomial.polynomial.polyval(tau, shifted)
    scale = np.polynomial.polynomial.polyval(abs(t0) + abs(tau), np.abs(c))
    assert np.all(np.abs(direct - rebased) <= 1e-12 * (1 + scale))


def test_distance_examples():
    a = AgentState(1, (0, 0), (0, 0))
    assert distance(a, AgentState(2, (0, 0), (0, 0))) == 0.0
    assert distance(a, AgentState(2, (3, 4), (0, 0))) == 5.0


def test_distance_symmetric_random():
    rng = np.random.default_rng(5)
    for _ in range(100):
        a = AgentState(1, rng.normal(size=2), (0, 0))
        b = AgentState(2, rng.normal(size=2), (0, 0))
        assert distance(a, b) == distance(b, a)
        assert distance(a, b) == pytest.approx(float(np.sqrt(np.sum((a.p - b.p) ** 2))), rel=1e-15)


def _two(d, h):
    goals = [GoalTrajectory(k, [[k, 0], [0, 0], [1, 0]]) for k in (1, 2)]
    return ScenarioConfig([AgentState(1, (0, 0), (0, 0)), AgentState(2, (d, 0), (0, 0))], goals, h=h, R=0.1)


def test_neighborhood_inside_horizon():
    cfg = _two(0.4, 0.5)
    assert neighborhood(cfg, 1) == {1, 2}
    assert neighborhood(cfg, 2) == {1, 2}


def test_neighborhood_outside_horizon():
    cfg = _two(0.6, 0.5)
    assert neighborhood(cfg, 1) == {1}
    assert neighborhood(cfg, 2) == {2}


def test_neighborhood_unbounded_horizon():
    cfg = _two(1e6, math.inf)
    assert neighborhood(cfg, 1) == {1, 2}


def test_neighborhood_unknown_agent():
    with pytest.raises(UnknownAgentError):
        neighborhood(_two(1.0, 2.0), 7)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=2, max_size=8), st.floats(0.1, 20))
def test_neighborhood_symmetric(points, h):
    agents = [AgentState(k + 1, p, (0, 0)) for k, p in enumerate(points)]
    cfg = ScenarioConfig(agents, [], h=h, R=0.01)
    nb = {a.id: neighborhood(cfg, a.id) for a in agents}
    for i in nb:
        assert i in nb[i]
        for j in nb[i]:
            assert i in nb[j]


def _scenario_dict(n_agents=10, n_goals=10, degree=4):
    agents = [{"id": k + 1, "p": [0.5 * k, -1.0], "v": [0.0, 0.0]} for k in range(n_agents)]
    tail = FORMATION_TAIL[: degree]
    goals = [{"id": k + 1, "coeffs": [[0.5 * k, 0.5]] + tail} for k in range(n_goals)]
    return {"agents": agents, "goals": goals,
            "params": {"h": "inf", "R": 0.1, "v_max": 3, "u_max": 5, "t_min": 1e-3, "t_max": 1e4,
                       "dt_scan": 0.01, "seed": 3}}


def test_load_valid_scenario():
    cfg = load_scenario(_scenario_dict())
    assert cfg.N == 10 and cfg.M == 10
    assert cfg.h == math.inf


def test_load_rejects_linear_goal():
    d = _scenario_dict(degree=1)
    with pytest.raises(ScenarioValidationError, match="goal degree η < 2"):
        load_scenario(d)


def test_load_rejects_fewer_goals_than_agents():
    with pytest.raises(ScenarioValidationError, match="M >= N violated"):
        load_scenario(_scenario_dict(n_goals=9))


def test_load_rejects_overlap():
    d = _scenario_dict()
    d["agents"][1]["p"] = [0.05, -1.0]
    with pytest.raises(ScenarioValidationError, match="overlap"):
        load_scenario(d)


def test_load_rejects_small_horizon():
    d = _scenario_dict()
    d["params"]["h"] = 0.3
    with pytest.raises(ScenarioValidationError, match="h >= 4R"):
        load_scenario(d)


def test_load_rejects_bad_yaml():
    with pytest.raises(ScenarioParseError):
        load_scenario("agents: [\n  - {id: 1,\n")


def test_load_rejects_non_mapping():
    with pytest.raises(ScenarioParseError):
        load_scenario("- 1\n- 2\n")


def test_round_trip_is_identical(tmp_path):
    cfg = load_scenario(_scenario_dict())
    text = dump_scenario(cfg)
    again = load_scenario(text)
    assert again == cfg
    path = tmp_path / "s.json"
    path.write_text(text)
    assert load_scenario(path) == cfg
    assert dump_scenario(again) == text


def test_generated_agents_are_seeded_and_separated(golden_cfg):
    again = load_scenario(dump_scenario(golden_cfg))
    assert again == golden_cfg
    ps = np.array([a.p for a in golden_cfg.agents])
    d = np.hypot(*(ps[:, None, :] - ps[None, :, :]).transpose(2, 0, 1))
    assert np.all(d[np.triu_indices(len(ps), 1)] >= 2 * golden_cfg.R)
