"""Local agent-to-goal assignment at minimum total unconstrained energy."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .energy import minimize_energy
from .errors import InfeasibleAssignmentError
from .worldmodel import AgentState, GoalTrajectory

#: Cost-matrix entry for a banned agent/goal pair. Treated as a deleted edge.
BANNED = np.inf

BRUTE_FORCE_MAX_ROWS = 9


def _tie_tol(x):
    return 1e-12 * (1.0 + abs(x))


@dataclass
class CostMatrix:
    rows: list[int]
    cols: list[int]
    cost: np.ndarray

    def __post_init__(self):
        self.cost = np.asarray(self.cost, dtype=float)
        if self.cost.shape != (len(self.rows), len(self.cols)):
            raise ValueError(f"cost shape {self.cost.shape} does not match {len(self.rows)} rows x {len(self.cols)} cols")
        allowed = self.cost[np.isfinite(self.cost)]
        if np.any(np.isnan(self.cost)) or np.any(self.cost == -np.inf):
            raise ValueError("cost entries must be finite or BANNED")
        if allowed.size and allowed.min() < 0:
            raise ValueError("costs must be non-negative")

    @classmethod
    def from_array(cls, cost, rows=None, cols=None, bans: Mapping[int, set] | None = None):
        cost = np.array(cost, dtype=float)
        if cost.ndim == 1:
            cost = cost[None, :]
        rows = list(rows) if rows is not None else list(range(1, cost.shape[0] + 1))
        cols = list(cols) if cols is not None else list(range(1, cost.shape[1] + 1))
        for r, banned in (bans or {}).items():
            for k in banned:
                cost[rows.index(r), cols.index(k)] = BANNED
        return cls(rows, cols, cost)

    def banned(self, agent: int, goal: int) -> bool:
        return not np.isfinite(self.cost[self.rows.index(agent), self.cols.index(goal)])


@dataclass
class Assignment:
    pairs: dict[int, int]
    objective: float
    rows: list[int] = field(default_factory=list)

    def goal_of(self, agent: int) -> int:
        return self.pairs[agent]


class EnergyCache:
    """Memo of minimum energies keyed by (agent state, goal, frame time)."""

    def __init__(self, t_min: float, t_max: float):
        self.t_min = t_min
        self.t_max = t_max
        self._store = {}

    def profile(self, state: AgentState, goal: GoalTrajectory, t0: float = 0.0):
        key = (state.key(), goal.id, goal.coeffs.tobytes(), t0)
        prof = self._store.get(key)
        if prof is None:
            prof = minimize_energy(state, goal, self.t_min, self.t_max, t0)
            self._store[key] = prof
        return prof

    def __len__(self):
        return len(self._store)


def build_cost_matrix(
    members: Sequence[AgentState],
    goals: Sequence[GoalTrajectory],
    bans: Mapping[int, set] | None = None,
    t_min: float = 1e-3,
    t_max: float = 1e4,
    t0: float = 0.0,
    cache: EnergyCache | None = None,
    strict: bool = True,
) -> CostMatrix:
    """Energies of every member/goal pair, BANNED where a member banned the goal.

    With ``strict`` a member left with no admissible goal, or more members
    than goals, is reported before any energy is computed. Subtler conflicts
    (two members whose only admissible goal is the same) surface in the solver.
    """
    if not members:
        raise ValueError("cost matrix needs at least one member")
    bans = bans or {}
    cache = cache or EnergyCache(t_min, t_max)
    rows = sorted(a.id for a in members)
    by_id = {a.id: a for a in members}
    cols = sorted(g.id for g in goals)
    by_gid = {g.id: g for g in goals}
    if strict and len(rows) > len(cols):
        raise InfeasibleAssignmentError(f"{len(rows)} members cannot take distinct goals among {len(cols)}")
    cost = np.empty((len(rows), len(cols)))
    for r, i in enumerate(rows):
        banned = bans.get(i, ())
        if strict and all(k in banned for k in cols):
            raise InfeasibleAssignmentError(f"agent {i} is banned from every goal", agent=i)
        for c, k in enumerate(cols):
            if k in banned:
                cost[r, c] = BANNED
            else:
                cost[r, c] = cache.profile(by_id[i], by_gid[k], t0).e_star
    return CostMatrix(rows, cols, cost)


def _canonical(c: CostMatrix):
    # rows by agent id, columns by goal id: the order the tie rule is defined in
    ro = np.argsort(c.rows, kind="stable")
    co = np.argsort(c.cols, kind="stable")
    return [c.rows[k] for k in ro], [c.cols[k] for k in co], c.cost[np.ix_(ro, co)]


def _solve(cost):
    col, u, v, ok = kernels.hungarian(np.ascontiguousarray(cost))
    return col, u, v, ok


def _objective(cost, col_of_row):
    total = 0.0
    for r, c in enumerate(col_of_row):
        total += cost[r, c]
    return total


def solve_assignment(c: CostMatrix) -> Assignment:
    """Exact minimum-cost assignment; ties go to the lexicographically smallest
    goal sequence taken in agent-id order."""
    rows, cols, cost = _canonical(c)
    n, m = cost.shape
    if n > m:
        raise InfeasibleAssignmentError(f"{n} agents cannot take distinct goals among {m}")
    col, u, v, ok = _solve(cost)
    if not ok:
        raise InfeasibleAssignmentError("no assignment avoids every banned goal")

    # Lexicographic tie-break. Any assignment that uses edge (r, k) costs at
    # least optimum + reduced cost of (r, k) (dual bound), so only edges with
    # numerically zero reduced cost need a trial re-solve.
    free_rows = list(range(n))
    free_cols = list(range(m))
    sub_col = {r: int(col[r]) for r in range(n)}
    sub_u = {r: u[r] for r in range(n)}
    sub_v = {k: v[k] for k in range(m)}
    chosen = {}
    remaining_opt = _objective(cost, col)
    while free_rows:
        r = free_rows[0]
        current = sub_col[r]
        screen = 1e-9 * (1.0 + abs(remaining_opt))
        picked = None
        for k in free_cols:
            if k >= current:
                break
            if not np.isfinite(cost[r, k]):
                continue
            if cost[r, k] - sub_u[r] - sub_v[k] > screen:
                continue
            rest_rows = free_rows[1:]
            rest_cols = [x for x in free_cols if x != k]
            if rest_rows:
                sub = cost[np.ix_(rest_rows, rest_cols)]
                scol, su, sv, sok = _solve(sub)
                if not sok:
                    continue
                val = cost[r, k] + _objective(sub, scol)
            else:
                val = cost[r, k]
            if val <= remaining_opt + _tie_tol(remaining_opt):
                picked = k
                remaining_opt = val - cost[r, k]
                sub_col = {rr: rest_cols[int(scol[x])] for x, rr in enumerate(rest_rows)} if rest_rows else {}
                sub_u = {rr: su[x] for x, rr in enumerate(rest_rows)} if rest_rows else {}
                sub_v = {cc: sv[x] for x, cc in enumerate(rest_cols)} if rest_rows else {}
                break
        if picked is None:
            picked = current
            remaining_opt -= cost[r, current]
        chosen[r] = picked
        free_rows.pop(0)
        free_cols.remove(picked)

    pairs = {rows[r]: cols[chosen[r]] for r in range(n)}
    objective = 0.0
    for r in range(n):
        objective += cost[r, chosen[r]]
    return Assignment(pairs=pairs, objective=float(objective), rows=rows)


def brute_force_assignment(c: CostMatrix) -> Assignment:
    """Exhaustive search over injective agent-to-goal maps (test oracle).

    Maps are visited in lexicographic order of the goal sequence (agents in id
    order); a later map replaces the incumbent only if strictly cheaper, so the
    tie rule matches :func:`solve_assignment`. Branches whose partial sum
    already exceeds the incumbent are cut; costs are non-negative, so this
    never discards an optimal or tied map.
    """
    rows, cols, cost = _canonical(c)
    n, m = cost.shape
    if n > BRUTE_FORCE_MAX_ROWS:
        raise ValueError(f"brute force refused: {n} rows exceeds the limit of {BRUTE_FORCE_MAX_ROWS}")
    best_obj = np.inf
    best = None
    taken = [False] * m
    path = [0] * n
    cost_list = cost.tolist()

    def visit(r, partial):
        nonlocal best_obj, best
        if r == n:
            if best is None or partial < best_obj - _tie_tol(best_obj):
                best_obj = partial
                best = list(path)
            return
        row = cost_list[r]
        for k in range(m):
            if taken[k] or row[k] == np.inf:
                continue
            nxt = partial + row[k]
            if best is not None and nxt > best_obj + _tie_tol(best_obj):
                continue
            taken[k] = True
            path[r] = k
            visit(r + 1, nxt)
            taken[k] = False

    visit(0, 0.0)
    if best is None:
        raise InfeasibleAssignmentError("no assignment avoids every banned goal")
    pairs = {rows[r]: cols[best[r]] for r in range(n)}
    return Assignment(pairs=pairs, objective=float(best_obj), rows=rows)
