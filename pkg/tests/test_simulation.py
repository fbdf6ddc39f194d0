import json
import math

import numpy as np
import pytest

from swarmgoal import cli
from swarmgoal.simulation import (
    ARRIVAL,
    ENTER,
    EXIT,
    RunMetrics,
    agent_energy,
    compare_fixed_T,
    event_log_jsonl,
    metrics_json,
    pair_dominance,
    run_simulation,
    sweep_csv,
    sweep_h,
    trace_csv,
)
from swarmgoal.trajectory import TRACK
from swarmgoal.worldmodel import AgentState, GoalTrajectory, ScenarioConfig, dump_scenario

from .conftest import FORMATION_TAIL


def formation_goal(k, x, y):
    return GoalTrajectory(k, [[x, y]] + FORMATION_TAIL)


def small_cfg(h=math.inf, n=3):
    agents = [AgentState(k + 1, (-1.0 + 0.6 * k, -1.0), (0, 0)) for k in range(n)]
    goals = [formation_goal(k + 1, 0.5 * k, 0.5) for k in range(n)]
    return ScenarioConfig(agents, goals, h=h, R=0.1, v_max=3.0, u_max=5.0)


def test_single_agent_reaches_its_goal():
    cfg = ScenarioConfig([AgentState(1, (0, 0), (0, 0))], [formation_goal(1, 1, 0.5)])
    trace, m = run_simulation(cfg)
    assert m.total_bans == 0 and m.converged and m.unique
    t_arr = trace.arrivals[1]
    seg = trace.segment_at(1, t_arr)
    g = cfg.goals[0]
    assert np.max(np.abs(seg.position(t_arr) - g.position(t_arr))) <= 1e-9
    assert np.max(np.abs(seg.velocity(t_arr) - g.velocity(t_arr))) <= 1e-9
    assert trace.horizon == pytest.approx(t_arr + 0.5)


def test_two_agents_with_global_information_never_ban():
    # both start nearest goal 1
    agents = [AgentState(1, (0.9, 0.0), (0, 0)), AgentState(2, (1.1, 0.0), (0, 0))]
    cfg = ScenarioConfig(agents, [formation_goal(1, 1.0, 0.5), formation_goal(2, 3.0, 0.5)])
    trace, m = run_simulation(cfg)
    assert m.total_bans == 0
    assert sorted(trace.protocol.prescribed.values()) == [1, 2]


def test_golden_unbounded_horizon_has_no_bans(golden_cfg):
    _, m = run_simulation(golden_cfg)
    assert m.total_bans == 0
    assert m.converged and m.unique
    assert m.repair_failures == 0


def test_runs_are_byte_identical():
    cfg = small_cfg(h=0.8)
    a, _ = run_simulation(cfg)
    b, _ = run_simulation(cfg)
    assert trace_csv(a) == trace_csv(b)
    assert event_log_jsonl(a) == event_log_jsonl(b)


def test_trace_row_count():
    cfg = small_cfg()
    trace, _ = run_simulation(cfg)
    lines = trace_csv(trace).splitlines()
    assert lines[0] == "t,agent,px,py,vx,vy,ux,uy,goal"
    per_agent = math.ceil(trace.horizon / cfg.dt_scan - 1e-9) + 1
    assert len(lines) - 1 == per_agent * cfg.N


def test_metrics_round_trip():
    _, m = run_simulation(small_cfg())
    again = RunMetrics.from_json(json.loads(metrics_json(m)))
    assert again == m


def test_energy_is_half_integral_up_to_arrival():
    trace, m = run_simulation(small_cfg())
    for i, path in trace.paths.items():
        total = sum(s.energy_between(s.t0, min(s.tf, trace.arrivals[i])) for s in path
                    if s.kind != TRACK and s.t0 < trace.arrivals[i])
        assert m.per_agent_energy[i] == pytest.approx(0.5 * total / 1000.0, rel=1e-12, abs=1e-18)
        assert agent_energy(path, trace.arrivals[i]) == pytest.approx(0.5 * total, rel=1e-12, abs=1e-15)


def test_paths_are_continuous():
    trace, _ = run_simulation(small_cfg(h=0.8, n=4))
    for path in trace.paths.values():
        for a, b in zip(path[:-1], path[1:]):
            assert b.t0 == pytest.approx(a.tf, abs=1e-12)
            assert np.max(np.abs(a.position(a.tf) - b.position(b.t0))) <= 1e-9
            assert np.max(np.abs(a.velocity(a.tf) - b.velocity(b.t0))) <= 1e-9


def test_neighborhood_events_are_located_precisely():
    cfg = small_cfg(h=0.55, n=4)
    trace, _ = run_simulation(cfg)
    crossings = [e for e in trace.events if e.kind in (ENTER, EXIT)]
    assert crossings
    for ev in crossings:
        i, j = ev.participants
        pi, pj = trace.segment_at(i, ev.t).position(ev.t), trace.segment_at(j, ev.t).position(ev.t)
        assert abs(math.hypot(*(pi - pj)) - cfg.h) <= 1e-8


def test_arrival_events_match_arrivals():
    trace, _ = run_simulation(small_cfg())
    arrivals = {e.participants[0]: e.t for e in trace.events if e.kind == ARRIVAL}
    for i, t in trace.arrivals.items():
        assert arrivals[i] <= t


def test_pair_dominance_holds(golden_cfg):
    rows = pair_dominance(golden_cfg, 5.0)
    assert len(rows) == golden_cfg.N * golden_cfg.M
    assert all(r["ok"] for r in rows)


def test_compare_reports_reduction():
    rep = compare_fixed_T(small_cfg(), 5.0)
    assert rep["pair_dominance_violations"] == []
    assert rep["reduction_percent"] > 0
    assert rep["fixed"]["arrival_time_s"] == pytest.approx(5.0)


def test_compare_rejects_non_positive_time():
    with pytest.raises(ValueError):
        compare_fixed_T(small_cfg(), 0.0)


def test_sweep_emits_one_row_per_h():
    rows = sweep_h(small_cfg(), [math.inf, 1.0])
    text = sweep_csv(rows)
    lines = text.splitlines()
    assert lines[0] == "h,min_separation_cm,E_kJ_per_kg,t_f_s,total_bans,error"
    assert len(lines) == 3 and lines[1].startswith("inf,")
    assert rows[0]["total_bans"] == 0


def test_sweep_records_invalid_h_instead_of_raising():
    rows = sweep_h(small_cfg(), [0.2])
    assert "h >= 4R" in rows[0]["error"]


# -- command line ------------------------------------------------------------


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(dump_scenario(small_cfg()))
    return path


def test_cli_validate(scenario_file, capsys):
    assert cli.main(["validate", str(scenario_file)]) == 0
    assert "N=3" in capsys.readouterr().out


def test_cli_invalid_scenario_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("agents: [\n")
    assert cli.main(["validate", str(bad)]) == 3
    d = json.loads(dump_scenario(small_cfg()))
    d["goals"] = d["goals"][:2]
    short = tmp_path / "short.json"
    short.write_text(json.dumps(d))
    assert cli.main(["run", str(short)]) == 3
    assert "M >= N violated" in capsys.readouterr().err


def test_cli_missing_file_exit_code(tmp_path):
    assert cli.main(["run", str(tmp_path / "nope.yaml")]) == 3


def test_cli_run_writes_outputs(scenario_file, tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["run", str(scenario_file), "--out-dir", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == {"events.jsonl", "metrics.json", "segments.jsonl", "trace.csv"}
    printed = json.loads(capsys.readouterr().out)
    assert printed == json.loads((out / "metrics.json").read_text())
    for line in (out / "segments.jsonl").read_text().splitlines():
        assert set(json.loads(line)) == {"agent", "t0", "tf", "coeffs_x", "coeffs_y", "energy"}
    for line in (out / "events.jsonl").read_text().splitlines():
        assert json.loads(line)["type"] in ("assign", "ban", "conflict", "arrive")


def test_cli_run_without_trace(scenario_file, tmp_path):
    out = tmp_path / "out"
    assert cli.main(["run", str(scenario_file), "--out-dir", str(out), "--no-trace"]) == 0
    assert not (out / "trace.csv").exists()


def test_cli_sweep(scenario_file, tmp_path, capsys):
    assert cli.main(["sweep", str(scenario_file), "--h", "inf,1.0", "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out == (tmp_path / "sweep.csv").read_text()
    assert len(out.splitlines()) == 3


def test_cli_compare(scenario_file, capsys):
    assert cli.main(["compare", str(scenario_file), "--fixed-t", "5"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["T_fixed"] == 5.0 and rep["reduction_percent"] > 0
