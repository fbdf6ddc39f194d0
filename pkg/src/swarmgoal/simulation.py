"""Event-driven swarm simulation, fixed-arrival-time comparison and sensing sweep."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .assignment import EnergyCache
from .energy import energy_at
from .errors import ProtocolInvariantError, ScenarioValidationError
from .protocol import (
    ARRIVE,
    EventRecord,
    PriorityContext,
    ProtocolState,
    convergence_audit,
    initial_assignment,
    reassess,
    resolve_conflicts,
)
from .trajectory import (
    HOLD,
    PLAN,
    TRACK,
    RepairContext,
    TrajectorySegment,
    check_limits,
    check_safety,
    plan_unconstrained,
    repair_trajectory,
    track_segment,
)
from .worldmodel import ScenarioConfig, within_horizon

log = logging.getLogger(__name__)

ENTER = "neighborhood-enter"
EXIT = "neighborhood-exit"
ARRIVAL = "arrival"
RESOLUTION = "conflict-resolution"
_KIND_ORDER = {ARRIVAL: 0, ENTER: 1, EXIT: 2, RESOLUTION: 3}

DEFAULT_TAIL = 0.5
EVENT_TIME_TOL = 1e-10
MAX_SIM_TIME = 1e4


@dataclass(frozen=True)
class SimEvent:
    t: float
    kind: str
    participants: tuple

    def sort_key(self):
        return (self.t, _KIND_ORDER[self.kind], min(self.participants))


@dataclass
class RunMetrics:
    per_agent_energy: dict  # kJ/kg, half-integral-of-|u|^2 convention
    total_energy: float  # kJ/kg
    arrival_time: float  # s, latest arrival
    min_separation: float  # cm
    total_bans: int
    premise_held: bool
    converged: bool = True
    unique: bool = True
    repair_failures: int = 0
    limit_flags: int = 0
    tracking_flags: int = 0
    events: int = 0

    def to_json(self) -> dict:
        d = asdict(self)
        d["per_agent_energy"] = {str(k): v for k, v in sorted(self.per_agent_energy.items())}
        return d

    @classmethod
    def from_json(cls, d: dict) -> "RunMetrics":
        d = dict(d)
        d["per_agent_energy"] = {int(k): v for k, v in d["per_agent_energy"].items()}
        return cls(**d)


@dataclass
class SimTrace:
    paths: dict  # agent -> list of executed TrajectorySegment
    events: list  # SimEvent, chronological
    log: list  # protocol EventRecord
    arrivals: dict  # agent -> final arrival time
    protocol: ProtocolState
    horizon: float
    dt_scan: float
    repair_failures: list = field(default_factory=list)
    limit_flags: list = field(default_factory=list)
    tracking_flags: list = field(default_factory=list)
    audit: object = None

    def segment_at(self, i, t):
        path = self.paths[i]
        for seg in path:
            if seg.t0 <= t < seg.tf:
                return seg
        return path[-1]


class Simulation:
    def __init__(self, cfg: ScenarioConfig, fixed_T: float | None = None, tail: float = DEFAULT_TAIL,
                 dt_scan: float | None = None):
        self.cfg = cfg
        self.ids = sorted(a.id for a in cfg.agents)
        self.goals = sorted(cfg.goals, key=lambda g: g.id)
        self.goal_by_id = {g.id: g for g in self.goals}
        self.h = cfg.h
        self.tail = tail
        self.dt = dt_scan if dt_scan is not None else cfg.dt_scan
        self.fixed_T = fixed_T
        self.paths = {}
        self.version = {i: 0 for i in self.ids}
        self.plan_end = {}
        self.arrived = {}
        self.proto = ProtocolState.empty(self.ids)
        self.events = []
        self.repair_failures = []
        self.limit_flags = []
        self._safe_memo = {}
        self._fail_memo = set()
        self.t = 0.0

    # -- kinematics ----------------------------------------------------------

    def _segment(self, i, t):
        for seg in self.paths[i]:
            if seg.t0 <= t < seg.tf:
                return seg
        return self.paths[i][-1]

    def state(self, i, t):
        return self._segment(i, t).state(t)

    def positions(self, t):
        return {i: self._segment(i, t).position(t) for i in self.ids}

    def states(self, t):
        return {i: self.state(i, t) for i in self.ids}

    def neighbor_matrix(self, t):
        pos = np.array([self._segment(i, t).position(t) for i in self.ids])
        diff = pos[:, None, :] - pos[None, :, :]
        d = np.hypot(diff[..., 0], diff[..., 1])
        return within_horizon(d, self.h)

    def neighborhoods(self, t, nb=None):
        nb = self.neighbor_matrix(t) if nb is None else nb
        return {i: {self.ids[c] for c in np.flatnonzero(nb[r])} for r, i in enumerate(self.ids)}

    def _cache(self):
        return EnergyCache(self.cfg.t_min, self.cfg.t_max)

    # -- planning ------------------------------------------------------------

    def _commit(self, i, t, segments):
        kept = [s for s in self.paths.get(i, []) if s.t0 < t]
        if kept and kept[-1].tf > t:
            kept[-1] = kept[-1].truncated(t)
        goal = self.goal_by_id[segments[-1].goal]
        end = segments[-1].tf
        self.paths[i] = kept + list(segments) + [track_segment(i, goal, end)]
        self.plan_end[i] = end
        self.arrived.pop(i, None)
        self.version[i] += 1

    def _fresh_plan(self, i, g, t, cache):
        st = self.state(i, t) if i in self.paths else self.cfg.agent(i)
        goal = self.goal_by_id[g]
        if self.fixed_T is not None:
            # baseline: same decisions, only the planned duration is pinned
            return plan_unconstrained(st, goal, self.fixed_T, t)
        prof = cache.profile(st, goal, t)
        return plan_unconstrained(st, goal, prof.t_star, t)

    def _priority_order(self, t, nbhds, cache, states):
        ctx = {}
        for i in self.ids:
            g = self.proto.prescribed[i]
            e = cache.profile(states[i], self.goal_by_id[g], t).e_star
            ctx[i] = PriorityContext(i, len(nbhds[i]), e)
        return sorted(self.ids, key=lambda i: ctx[i].rank())

    def _repair_ctx(self, g, higher):
        cfg = self.cfg
        return RepairContext(
            goal=self.goal_by_id[g], v_max=cfg.v_max, u_max=cfg.u_max, R=cfg.R,
            t_min=cfg.t_min, t_max=cfg.t_max, higher_priority=higher, tail=self.tail,
        )

    def _future(self, i, t):
        return [s for s in self.paths[i] if s.tf > t]

    def _window_end(self, *agents):
        return max(self.plan_end[a] for a in agents) + self.tail

    def _unsafe_with(self, i, higher_ids, t):
        """Higher-priority agents whose committed paths come within 2R of ``i``."""
        bad = []
        for j in higher_ids:
            key = (min(i, j), max(i, j))
            vers = (self.version[key[0]], self.version[key[1]])
            if self._safe_memo.get(key) == vers:
                continue
            rep = check_safety(self._future(i, t), self._future(j, t), self.cfg.R,
                               (t, self._window_end(i, j)))
            if rep.safety_violations:
                bad.append(j)
            else:
                self._safe_memo[key] = vers
        return bad

    def _plan_and_commit(self, i, t, cache, higher_ids, fresh):
        g = self.proto.prescribed[i]
        if fresh:
            seg = self._fresh_plan(i, g, t, cache)
            lim = check_limits(seg, self.cfg.v_max, self.cfg.u_max)
            segs = [seg]
            if not lim.feasible:
                res = repair_trajectory(seg, lim, self._repair_ctx(g, ()))
                if res.ok:
                    segs = res.segments
                else:
                    self.limit_flags.append({"t": t, "agent": i, "goal": g, "detail": res.detail})
            self._commit(i, t, segs)
        bad = self._unsafe_with(i, higher_ids, t)
        if not bad:
            return
        memo_key = (i, self.version[i], tuple((j, self.version[j]) for j in sorted(bad)))
        if memo_key in self._fail_memo:
            return
        higher_paths = [self._future(j, t) for j in higher_ids]
        seg = self._fresh_plan(i, g, t, cache)
        res = repair_trajectory(seg, check_safety(self._future(i, t), self._future(bad[0], t), self.cfg.R,
                                                  (t, self._window_end(i, bad[0]))),
                                self._repair_ctx(g, higher_paths))
        if res.ok:
            self._commit(i, t, res.segments)
            for j in higher_ids:
                key = (min(i, j), max(i, j))
                self._safe_memo[key] = (self.version[key[0]], self.version[key[1]])
        else:
            self._fail_memo.add(memo_key)
            self.repair_failures.append({
                "t": t, "agent": i, "goal": g, "others": sorted(bad),
                "strategy": res.strategy, "detail": res.detail,
            })
            log.info("repair failed for agent %d at t=%.4f: %s", i, t, res.detail)

    def _settle(self, t, nbhds, cache, reassigned):
        """Plan reassigned agents and restore separation, highest priority first."""
        states = self.states(t) if self.paths else {a.id: a for a in self.cfg.agents}
        order = self._priority_order(t, nbhds, cache, states)
        done = []
        for i in order:
            higher = [j for j in done if j in nbhds[i]]
            self._plan_and_commit(i, t, cache, higher, fresh=(i in reassigned or i not in self.paths))
            done.append(i)

    # -- event loop ----------------------------------------------------------

    def _crossing_time(self, i, j, lo, hi, inside_lo):
        for _ in range(200):
            if hi - lo <= EVENT_TIME_TOL:
                break
            mid = 0.5 * (lo + hi)
            pi, pj = self._segment(i, mid).position(mid), self._segment(j, mid).position(mid)
            inside = within_horizon(math.hypot(*(pi - pj)), self.h)
            if inside == inside_lo:
                lo = mid
            else:
                hi = mid
        return hi

    def _event(self, t, touched=()):
        """Agents in ``touched`` met a new neighbor at ``t`` and solve again;
        conflicts are checked for everyone."""
        cache = self._cache()
        nbhds = self.neighborhoods(t)
        states = self.states(t)
        reassigned = []
        reassess(self.proto, t, touched, nbhds, states, self.goals, cache,
                 replan=lambda i, g: reassigned.append(i))
        before = len(self.proto.log)
        resolve_conflicts(self.proto, t, nbhds, states, self.goals, cache,
                          replan=lambda i, g: reassigned.append(i))
        if len(self.proto.log) > before:
            self.events.append(SimEvent(t, RESOLUTION, tuple(sorted(set(
                r.agent for r in self.proto.log[before:])))))
        self._settle(t, nbhds, cache, set(reassigned))

    def run(self) -> SimTrace:
        cfg = self.cfg
        cache = self._cache()
        t = 0.0
        initial = {a.id: a for a in cfg.agents}
        nb = self._initial_neighbors()
        nbhds = {i: {self.ids[c] for c in np.flatnonzero(nb[r])} for r, i in enumerate(self.ids)}
        self.met = {i: set(nbhds[i]) for i in self.ids}
        initial_assignment(self.proto, nbhds, initial, self.goals, cache, t)
        resolve_conflicts(self.proto, t, nbhds, initial, self.goals, cache)
        self._settle(t, nbhds, cache, set(self.ids))
        prev = self.neighbor_matrix(t)

        while True:
            pending = [i for i in self.ids if i not in self.arrived]
            end = max(self.plan_end.values()) + self.tail
            if not pending and t >= end - 1e-12:
                break
            if t > MAX_SIM_TIME:
                raise ProtocolInvariantError(f"simulation exceeded {MAX_SIM_TIME} s without converging")
            k = math.floor(t / self.dt + 1e-9) + 1
            ts = k * self.dt
            if not pending:
                ts = min(ts, end)
            # arrivals due in (t, ts]
            due = [(self.plan_end[i], i) for i in pending if self.plan_end[i] <= ts]
            t_arr = min(due)[0] if due else math.inf
            nb = self.neighbor_matrix(ts)
            changed = np.argwhere(np.triu(nb != prev, 1))
            t_cross = math.inf
            crossings = []
            for r, c in changed:
                i, j = self.ids[r], self.ids[c]
                tc = self._crossing_time(i, j, t, ts, bool(prev[r, c]))
                crossings.append((tc, i, j))
                t_cross = min(t_cross, tc)
            te = min(t_arr, t_cross)
            if te == math.inf:
                t = ts
                prev = nb
                continue
            if t_arr <= t_cross:
                arrivals = sorted(i for tt, i in due if tt == t_arr)
                for i in arrivals:
                    self.arrived[i] = t_arr
                    self.proto.log.append(EventRecord(t_arr, ARRIVE, i, self.proto.prescribed[i]))
                    self.events.append(SimEvent(t_arr, ARRIVAL, (i,)))
                te = t_arr
            now = self.neighbor_matrix(te)
            flips = np.argwhere(np.triu(now != prev, 1))
            new_events = []
            touched = set()
            for r, c in flips:
                kind = ENTER if now[r, c] else EXIT
                new_events.append(SimEvent(te, kind, (self.ids[r], self.ids[c])))
                if kind == ENTER:
                    a, b = self.ids[r], self.ids[c]
                    # only a first meeting brings new information
                    if b not in self.met[a]:
                        touched.add(a)
                        self.met[a].add(b)
                    if a not in self.met[b]:
                        touched.add(b)
                        self.met[b].add(a)
            self.events.extend(sorted(new_events, key=SimEvent.sort_key))
            t = te
            self._event(t, touched)
            prev = self.neighbor_matrix(t)

        horizon = max(self.plan_end.values()) + self.tail
        paths = {}
        for i in self.ids:
            segs = [s for s in self.paths[i] if s.t0 < horizon]
            if segs[-1].tf > horizon:
                segs[-1] = segs[-1].truncated(horizon)
            paths[i] = segs
        self._audit_contacts(paths, horizon)
        trace = SimTrace(
            paths=paths, events=self.events, log=self.proto.log,
            arrivals=dict(self.arrived), protocol=self.proto, horizon=horizon, dt_scan=self.dt,
            repair_failures=self.repair_failures, limit_flags=self.limit_flags,
        )
        trace.tracking_flags = _tracking_flags(trace, cfg.u_max)
        trace.audit = convergence_audit(self.proto, self.arrived, len(self.goals))
        return trace

    def _audit_contacts(self, paths, horizon):
        """Record every loss of separation that no failed repair already covers.

        Safety is only planned against higher-priority neighbors, so two agents
        that never planned around each other can still touch; such contacts get
        their own failure record.
        """
        covered = set()
        for f in self.repair_failures:
            for j in f["others"]:
                covered.add((min(f["agent"], j), max(f["agent"], j)))
        for a in range(len(self.ids)):
            for b in range(a + 1, len(self.ids)):
                i, j = self.ids[a], self.ids[b]
                if (i, j) in covered:
                    continue
                rep = check_safety(paths[i], paths[j], self.cfg.R, (0.0, horizon))
                if rep.safety_violations:
                    _, t_in, t_out, dmin = rep.safety_violations[0]
                    self.repair_failures.append({
                        "t": t_in, "agent": i, "goal": self.proto.prescribed[i], "others": [j],
                        "strategy": "audit",
                        "detail": f"separation {dmin:.4g} m below 2R over [{t_in:.6g}, {t_out:.6g}] s "
                                  f"outside any repair attempt",
                    })

    def _initial_neighbors(self):
        pos = np.array([self.cfg.agent(i).p for i in self.ids])
        diff = pos[:, None, :] - pos[None, :, :]
        return within_horizon(np.hypot(diff[..., 0], diff[..., 1]), self.h)


def _tracking_flags(trace, u_max):
    flags = []
    if not math.isfinite(u_max):
        return flags
    for i, path in trace.paths.items():
        for seg in path:
            if seg.kind == TRACK and seg.tf > seg.t0:
                rep = check_limits(seg, math.inf, u_max)
                for a, b, peak in rep.u_violations:
                    flags.append({"agent": i, "t_start": a, "t_end": b, "peak": peak})
    return flags


def min_pairwise_separation(trace: SimTrace, t_end: float | None = None):
    """Exact minimum distance over all agent pairs on ``[0, t_end]``."""
    ids = sorted(trace.paths)
    best = math.inf
    pair = None
    end = trace.horizon if t_end is None else t_end
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            rep = check_safety(trace.paths[ids[a]], trace.paths[ids[b]], 0.0, (0.0, end))
            if rep.min_separation < best:
                best = rep.min_separation
                pair = (ids[a], ids[b])
    return best, pair


def agent_energy(path, until=None) -> float:
    """Half integral of |u|^2 over the executed path up to ``until`` [J/kg]."""
    total = 0.0
    for seg in path:
        hi = seg.tf if until is None else min(seg.tf, until)
        if seg.kind == TRACK or hi <= seg.t0:
            continue
        total += seg.energy_between(seg.t0, hi)
    return 0.5 * total


def compute_metrics(trace: SimTrace) -> RunMetrics:
    per_agent = {i: agent_energy(p, trace.arrivals.get(i)) / 1000.0 for i, p in trace.paths.items()}
    sep, _ = min_pairwise_separation(trace)
    audit = trace.audit
    return RunMetrics(
        per_agent_energy=per_agent,
        total_energy=float(sum(per_agent[i] for i in sorted(per_agent))),
        arrival_time=float(max(trace.arrivals.values())) if trace.arrivals else math.nan,
        min_separation=100.0 * sep,
        total_bans=audit.total_bans,
        premise_held=audit.premise_held,
        converged=audit.converged,
        unique=audit.unique,
        repair_failures=len(trace.repair_failures),
        limit_flags=len(trace.limit_flags),
        tracking_flags=len(trace.tracking_flags),
        events=len(trace.events),
    )


def run_simulation(cfg: ScenarioConfig, fixed_T: float | None = None, tail: float = DEFAULT_TAIL,
                   dt_scan: float | None = None):
    """Run the protocol on ``cfg``; returns ``(trace, metrics)``."""
    cfg.validate()
    trace = Simulation(cfg, fixed_T=fixed_T, tail=tail, dt_scan=dt_scan).run()
    return trace, compute_metrics(trace)


# ---------------------------------------------------------------------------
# experiments


def pair_dominance(cfg: ScenarioConfig, T_fixed: float):
    """Check ``E*(t_star) <= E(T_fixed)`` for every agent/goal pair at t = 0."""
    cache = EnergyCache(cfg.t_min, cfg.t_max)
    rows = []
    for a in sorted(cfg.agents, key=lambda x: x.id):
        for g in sorted(cfg.goals, key=lambda x: x.id):
            e_opt = cache.profile(a, g).e_star
            e_fix = energy_at(a, g, T_fixed)
            rows.append({"agent": a.id, "goal": g.id, "E_opt": e_opt, "E_fixed": e_fix,
                         "ok": e_opt <= e_fix * (1.0 + 1e-12) + 1e-15})
    return rows


def compare_fixed_T(cfg: ScenarioConfig, T_fixed: float = 5.0, optimized: RunMetrics | None = None,
                    **kw) -> dict:
    """Optimized arrival times against every plan lasting ``T_fixed``.

    ``optimized`` reuses metrics from an earlier run of ``cfg`` with the same options.
    """
    if not T_fixed > 0:
        raise ValueError("fixed arrival time must be positive")
    m_opt = optimized if optimized is not None else run_simulation(cfg, **kw)[1]
    trace_fix, m_fix = run_simulation(cfg, fixed_T=T_fixed, **kw)
    pairs = pair_dominance(cfg, T_fixed)
    reduction = 100.0 * (1.0 - m_opt.total_energy / m_fix.total_energy) if m_fix.total_energy > 0 else 0.0
    return {
        "T_fixed": T_fixed,
        "optimized": {"energy_kJ_per_kg": m_opt.total_energy, "arrival_time_s": m_opt.arrival_time,
                      "per_agent": m_opt.per_agent_energy},
        "fixed": {"energy_kJ_per_kg": m_fix.total_energy, "arrival_time_s": m_fix.arrival_time,
                  "per_agent": m_fix.per_agent_energy,
                  "infeasible_agents": sorted({f["agent"] for f in trace_fix.repair_failures + trace_fix.limit_flags})},
        "reduction_percent": reduction,
        "pairs_evaluated": len(pairs),
        "pair_dominance_violations": [p for p in pairs if not p["ok"]],
        "metrics": {"optimized": m_opt, "fixed": m_fix},
    }


SWEEP_COLUMNS = ["h", "min_separation_cm", "E_kJ_per_kg", "t_f_s", "total_bans", "error"]


def sweep_h(cfg: ScenarioConfig, h_values, **kw) -> list[dict]:
    if not h_values:
        raise ValueError("need at least one sensing distance")
    rows = []
    for h in h_values:
        h = float(h)
        row = {"h": h, "min_separation_cm": None, "E_kJ_per_kg": None, "t_f_s": None,
               "total_bans": None, "error": ""}
        try:
            _, m = run_simulation(cfg.replace(h=h), **kw)
            row.update(min_separation_cm=m.min_separation, E_kJ_per_kg=m.total_energy,
                       t_f_s=m.arrival_time, total_bans=m.total_bans)
        except (ScenarioValidationError, ProtocolInvariantError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# outputs


def _f(x):
    return repr(float(x))


def trace_rows(trace: SimTrace):
    n = math.ceil(trace.horizon / trace.dt_scan - 1e-9)
    for i in sorted(trace.paths):
        for k in range(n + 1):
            t = min(k * trace.dt_scan, trace.horizon)
            seg = trace.segment_at(i, t)
            p, v, u = seg.position(t), seg.velocity(t), seg.control(t)
            yield [_f(t), i, _f(p[0]), _f(p[1]), _f(v[0]), _f(v[1]), _f(u[0]), _f(u[1]), seg.goal]


TRACE_HEADER = ["t", "agent", "px", "py", "vx", "vy", "ux", "uy", "goal"]


def trace_csv(trace: SimTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    w.writerows(trace_rows(trace))
    return buf.getvalue()


def event_log_jsonl(trace: SimTrace) -> str:
    return "".join(json.dumps(r.to_json(), sort_keys=True) + "\n" for r in trace.log)


def metrics_json(metrics: RunMetrics) -> str:
    return json.dumps(metrics.to_json(), indent=2, sort_keys=True) + "\n"


def segments_jsonl(trace: SimTrace) -> str:
    lines = []
    for i in sorted(trace.paths):
        for seg in trace.paths[i]:
            if seg.kind in (PLAN, HOLD):
                lines.append(json.dumps(seg.to_record(), sort_keys=True))
    return "".join(line + "\n" for line in lines)


def emit_outputs(trace: SimTrace, metrics: RunMetrics, out_dir, write_trace: bool = True) -> dict:
    """Write trace CSV, event log, segment dump and metrics into ``out_dir``."""
    out = Path(out_dir)
    files = {
        "events": (out / "events.jsonl", event_log_jsonl(trace)),
        "metrics": (out / "metrics.json", metrics_json(metrics)),
        "segments": (out / "segments.jsonl", segments_jsonl(trace)),
    }
    if write_trace:
        files["trace"] = (out / "trace.csv", trace_csv(trace))
    written = {}
    for name, (path, text) in files.items():
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text)
        except OSError as exc:
            raise OSError(f"could not write {name} output to {path}: {exc}") from exc
        written[name] = path
    return written


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("inf" if k == "h" and r[k] == math.inf else r[k]) for k in SWEEP_COLUMNS})
    return buf.getvalue()
