"""Event-driven banning and reassignment protocol.

Agents that prescribe themselves the same goal while inside each other's
neighborhood compare priority; each loser permanently bans that goal, solves
its local assignment again and re-plans. Cascades run to quiescence within a
single instant.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .assignment import BANNED, CostMatrix, EnergyCache, build_cost_matrix, solve_assignment
from .errors import InfeasibleAssignmentError, ProtocolInvariantError
from .worldmodel import AgentState, GoalTrajectory

ASSIGN = "assign"
BAN = "ban"
CONFLICT = "conflict"
ARRIVE = "arrive"

log = logging.getLogger(__name__)


@dataclass
class EventRecord:
    t: float
    type: str
    agent: int
    goal: int | None = None
    E_star: float | None = None
    competing_ids: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "type": self.type,
            "agent": self.agent,
            "goal": self.goal,
            "E_star": self.E_star,
            "competing_ids": sorted(self.competing_ids),
        }


@dataclass
class ProtocolState:
    prescribed: dict = field(default_factory=dict)  # agent -> goal id or None
    bans: dict = field(default_factory=dict)  # agent -> set of goal ids
    history: dict = field(default_factory=dict)  # agent -> [(t, goal, E*)]
    log: list = field(default_factory=list)

    @classmethod
    def empty(cls, agent_ids) -> "ProtocolState":
        ids = sorted(agent_ids)
        return cls(
            prescribed={i: None for i in ids},
            bans={i: set() for i in ids},
            history={i: [] for i in ids},
        )

    @property
    def total_bans(self) -> int:
        return sum(len(b) for b in self.bans.values())

    def assign(self, i: int, goal: int, e_star: float, t: float):
        if goal in self.bans[i]:
            raise ProtocolInvariantError(f"agent {i} prescribed its banned goal {goal}")
        self.prescribed[i] = goal
        self.history[i].append((t, goal, e_star))
        self.log.append(EventRecord(t, ASSIGN, i, goal, e_star))

    def ban(self, i: int, goal: int, t: float, competitors=()):
        self.bans[i].add(goal)
        self.log.append(EventRecord(t, BAN, i, goal, None, list(competitors)))


@dataclass(frozen=True)
class PriorityContext:
    id: int
    n_neighbors: int
    energy: float

    def rank(self):
        # larger neighborhood, then lower energy, then lower id
        return (-self.n_neighbors, self.energy, self.id)


def priority(i: PriorityContext, j: PriorityContext) -> int:
    """1 if ``i`` has priority over ``j``, else 0 (antisymmetric)."""
    if i.id == j.id:
        raise ValueError(f"priority is undefined between agent {i.id} and itself")
    return 1 if i.rank() < j.rank() else 0


def competing_set(i: int, state: ProtocolState, nbhd) -> set[int]:
    g = state.prescribed.get(i)
    if g is None:
        return set()
    return {j for j in nbhd if j != i and state.prescribed.get(j) == g}


def _covering_matrix(cm: CostMatrix, i: int) -> CostMatrix:
    """Append one "unmatched" column per member other than ``i``.

    Its cost exceeds any sum of real entries, so the optimum first maximizes
    the number of matched members, always matches ``i``, and then minimizes
    energy among those maps.
    """
    finite = cm.cost[np.isfinite(cm.cost)]
    penalty = 1.0 + 2.0 * len(cm.rows) * (float(finite.max()) if finite.size else 1.0)
    others = [j for j in cm.rows if j != i]
    extra = np.full((len(cm.rows), len(others)), BANNED)
    for c, j in enumerate(others):
        extra[cm.rows.index(j), c] = penalty
    # dummy ids sort after every goal id
    top = max(cm.cols) + 1
    return CostMatrix(cm.rows, cm.cols + [top + c for c in range(len(others))], np.hstack([cm.cost, extra]))


def solve_local(
    i: int,
    state: ProtocolState,
    nbhd,
    states: Mapping[int, AgentState],
    goals,
    cache: EnergyCache,
    t: float,
):
    """Agent ``i`` solves the assignment over its neighborhood; returns (goal, E*).

    With a finite horizon two members may each hold a goal the other one
    banned without being neighbors of each other, so the full local problem
    can be infeasible. Then the neighbors that cannot all be placed are left
    unmatched (fewest possible) and ``i`` keeps its own row; ``i`` itself must
    always have an admissible goal.
    """
    members = [states[j] for j in sorted(nbhd)]
    bans = {j: state.bans[j] for j in nbhd}
    cm = build_cost_matrix(members, goals, bans, cache.t_min, cache.t_max, t, cache, strict=False)
    try:
        sol = solve_assignment(cm)
    except InfeasibleAssignmentError:
        if len(bans[i]) >= len(cm.cols):
            raise ProtocolInvariantError(f"agent {i} at t={t:.6g} is banned from every goal") from None
        sol = solve_assignment(_covering_matrix(cm, i))
        dropped = sorted(j for j, g in sol.pairs.items() if g not in cm.cols)
        log.info("t=%.6g agent %d: local problem infeasible, neighbors %s left unmatched", t, i, dropped)
    g = sol.pairs[i]
    return g, float(cm.cost[cm.rows.index(i), cm.cols.index(g)])


def initial_assignment(state: ProtocolState, nbhds, states, goals, cache, t=0.0, replan=None):
    """Every agent solves its local problem once and adopts its own row."""
    for i in sorted(nbhds):
        g, e = solve_local(i, state, nbhds[i], states, goals, cache, t)
        state.assign(i, g, e, t)
        if replan is not None:
            replan(i, g)
    return state


def reassess(state: ProtocolState, t: float, agents, nbhds, states, goals, cache, replan=None) -> list[int]:
    """Agents whose neighborhood just changed solve their local problem again.

    The local problem depends only on states and ban sets, so the order of the
    solves does not matter. An agent whose goal is unchanged keeps its plan;
    the others are reported through ``replan`` and returned.
    """
    moved = []
    for i in sorted(agents):
        g, e = solve_local(i, state, nbhds[i], states, goals, cache, t)
        if g != state.prescribed[i]:
            state.assign(i, g, e, t)
            moved.append(i)
            if replan is not None:
                replan(i, g)
    return moved


def resolve_conflicts(
    state: ProtocolState,
    t: float,
    nbhds: Mapping[int, set],
    states: Mapping[int, AgentState],
    goals,
    cache: EnergyCache,
    replan: Callable[[int, int], None] | None = None,
    agents=None,
) -> ProtocolState:
    """Run ban/reassign rounds until no agent shares its goal with a neighbor.

    In each round every agent that has a higher-priority competitor bans its
    current goal; the losers then re-solve in id order. ``replan(i, goal)`` is
    called after each reassignment.
    """
    goal_by_id = {g.id: g for g in goals}
    agents = sorted(nbhds) if agents is None else sorted(agents)
    max_rounds = sum(len(goal_by_id) for _ in agents) + 1
    for _ in range(max_rounds):
        contested = {}
        for i in agents:
            c = competing_set(i, state, nbhds[i])
            if c:
                contested[i] = c
        if not contested:
            return state
        ctx = {}
        for i in contested:
            g = state.prescribed[i]
            e = cache.profile(states[i], goal_by_id[g], t).e_star
            ctx[i] = PriorityContext(i, len(nbhds[i]), e)
            state.log.append(EventRecord(t, CONFLICT, i, g, e, sorted(contested[i])))
        losers = [
            i for i in sorted(contested)
            if any(priority(ctx[j], ctx[i]) for j in contested[i])
        ]
        if not losers:
            raise ProtocolInvariantError("conflict without a lower-priority agent")
        for i in losers:
            state.ban(i, state.prescribed[i], t, contested[i])
        for i in losers:
            g, e = solve_local(i, state, nbhds[i], states, goals, cache, t)
            state.assign(i, g, e, t)
            if replan is not None:
                replan(i, g)
    raise ProtocolInvariantError("conflict resolution did not reach quiescence")


@dataclass
class AuditReport:
    unique: bool
    all_arrived: bool
    arrival_time: float
    premise_held: bool
    premise_violations: list
    total_bans: int
    bans_monotone: bool
    ban_bound_ok: bool

    @property
    def converged(self) -> bool:
        return self.unique and self.all_arrived

    def to_json(self) -> dict:
        return {
            "unique": self.unique,
            "all_arrived": self.all_arrived,
            "arrival_time": self.arrival_time,
            "premise_held": self.premise_held,
            "premise_violations": self.premise_violations,
            "total_bans": self.total_bans,
            "bans_monotone": self.bans_monotone,
            "ban_bound_ok": self.ban_bound_ok,
        }


def ban_counts_monotone(log) -> bool:
    """Ban sets only grow: no ban is ever repeated or withdrawn in the log."""
    seen = set()
    for rec in log:
        if rec.type == BAN:
            key = (rec.agent, rec.goal)
            if key in seen:
                return False
            seen.add(key)
    return True


def convergence_audit(state: ProtocolState, arrivals: Mapping[int, float] | None = None, n_goals: int | None = None) -> AuditReport:
    """Check the convergence claims on a finished run.

    The premise (an agent's minimum energy to a goal never increases across
    sequential assignments to that goal) is not enforced during the run, only
    audited here; each violation is listed with both energies.
    """
    arrivals = arrivals or {}
    goals = [state.prescribed[i] for i in sorted(state.prescribed)]
    unique = None not in goals and len(set(goals)) == len(goals)
    all_arrived = all(i in arrivals for i in state.prescribed)
    arrival_time = max(arrivals.values()) if arrivals else math.nan
    violations = []
    for i, hist in sorted(state.history.items()):
        last = {}
        for t, g, e in hist:
            if g in last:
                t1, e1 = last[g]
                if e > e1 + 1e-9 * (1.0 + abs(e1)):
                    violations.append({"agent": i, "goal": g, "t1": t1, "E1": e1, "t2": t, "E2": e})
            last[g] = (t, e)
    n_goals = n_goals if n_goals is not None else len(state.prescribed)
    return AuditReport(
        unique=unique,
        all_arrived=all_arrived,
        arrival_time=arrival_time,
        premise_held=not violations,
        premise_violations=violations,
        total_bans=state.total_bans,
        bans_monotone=ban_counts_monotone(state.log),
        ban_bound_ok=all(len(b) <= n_goals - 1 for b in state.bans.values()),
    )
