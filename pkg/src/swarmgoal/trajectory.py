"""Minimum-energy trajectories toward the prescribed goal, analytic feasibility
checks, and the repair heuristic used when a plan breaks a limit.

A trajectory is a list of :class:`TrajectorySegment` pieces, each a polynomial
position in local time ``tau = t - t0``. Planned arcs are cubics; holds are
zero-control coasts; tracking pieces follow the goal polynomial after arrival.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from . import kernels
from .energy import boundary_coefficients, energy_from_coefficients, minimize_energy
from .errors import RepairRefused
from .worldmodel import AgentState, GoalTrajectory, derivative_coeffs, shift_coeffs

PLAN = "plan"
HOLD = "hold"
TRACK = "track"

DILATION_FACTORS = tuple(round(1.0 + 0.1 * k, 1) for k in range(1, 21))  # 1.1 .. 3.0
HOLD_STEP = 0.1
MAX_HOLD = 5.0


def _pval(c, tau):
    return np.array([kernels.polyval(c[:, 0], tau), kernels.polyval(c[:, 1], tau)])


def _norm2_poly(c):
    """``|x(tau)|^2`` as a scalar polynomial for a 2-column coefficient array."""
    x, y = c[:, 0], c[:, 1]
    return np.convolve(x, x) + np.convolve(y, y)


@dataclass(frozen=True, eq=False)
class TrajectorySegment:
    agent: int
    t0: float
    tf: float
    coeffs: np.ndarray  # position in tau = t - t0, shape (deg + 1, 2)
    kind: str = PLAN
    goal: int | None = None
    energy: float = 0.0  # integral of |u|^2 over [t0, tf]; 0 for open-ended tracking

    def __post_init__(self):
        c = np.ascontiguousarray(np.array(self.coeffs, dtype=float))
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        d1 = np.ascontiguousarray(derivative_coeffs(c))
        d2 = np.ascontiguousarray(derivative_coeffs(d1))
        object.__setattr__(self, "_vel", d1)
        object.__setattr__(self, "_acc", d2)

    @property
    def duration(self) -> float:
        return self.tf - self.t0

    @property
    def vel_coeffs(self) -> np.ndarray:
        return self._vel

    @property
    def acc_coeffs(self) -> np.ndarray:
        return self._acc

    def position(self, t: float) -> np.ndarray:
        return _pval(self.coeffs, t - self.t0)

    def velocity(self, t: float) -> np.ndarray:
        return _pval(self._vel, t - self.t0)

    def control(self, t: float) -> np.ndarray:
        return _pval(self._acc, t - self.t0)

    def state(self, t: float) -> AgentState:
        return AgentState(self.agent, self.position(t), self.velocity(t))

    def rebased(self, t_new: float) -> np.ndarray:
        """Position coefficients in ``t - t_new``."""
        return shift_coeffs(self.coeffs, t_new - self.t0)

    def energy_between(self, ta: float, tb: float) -> float:
        """Closed-form integral of ``|u|^2`` over ``[ta, tb]``."""
        if tb <= ta:
            return 0.0
        q = P.polyint(_norm2_poly(self._acc))
        return float(P.polyval(tb - self.t0, q) - P.polyval(ta - self.t0, q))

    def truncated(self, t_end: float) -> "TrajectorySegment":
        t_end = min(t_end, self.tf)
        return TrajectorySegment(
            self.agent, self.t0, t_end, self.coeffs, self.kind, self.goal,
            self.energy_between(self.t0, t_end),
        )

    def cubic_xy(self):
        """Four position coefficients per axis (zero padded) for the dump format."""
        out = np.zeros((4, 2))
        n = min(4, self.coeffs.shape[0])
        out[:n] = self.coeffs[:n]
        return out[:, 0].tolist(), out[:, 1].tolist()

    def to_record(self) -> dict:
        cx, cy = self.cubic_xy()
        return {
            "agent": self.agent,
            "t0": self.t0,
            "tf": self.tf,
            "coeffs_x": cx,
            "coeffs_y": cy,
            "energy": self.energy,
        }


def plan_unconstrained(state: AgentState, goal: GoalTrajectory, t_star: float, t0: float = 0.0) -> TrajectorySegment:
    """Cubic arc from ``state`` at absolute time ``t0`` to the goal at ``t0 + t_star``."""
    if not (t_star > 0) or not math.isfinite(t_star):
        raise ValueError(f"arrival time must be positive, got {t_star}")
    bc = boundary_coefficients(state, goal, t_star, t0)
    coeffs = np.array([state.p, state.v, bc.b / 2.0, bc.a / 6.0])
    return TrajectorySegment(
        state.id, t0, t0 + t_star, coeffs, PLAN, goal.id,
        energy_from_coefficients(bc.a, bc.b, t_star),
    )


def hold_segment(state: AgentState, t0: float, duration: float, goal: int | None = None) -> TrajectorySegment:
    """Come to rest under constant deceleration over ``duration``.

    An agent already at rest simply stays put. The control is ``-v / duration``
    and the energy ``|v|^2 / duration``.
    """
    if not duration > 0:
        raise ValueError(f"hold duration must be positive, got {duration}")
    coeffs = np.array([state.p, state.v, -0.5 * state.v / duration])
    energy = float(state.v @ state.v) / duration
    return TrajectorySegment(state.id, t0, t0 + duration, coeffs, HOLD, goal, energy)


def track_segment(agent: int, goal: GoalTrajectory, t0: float, tf: float = math.inf) -> TrajectorySegment:
    """Exact goal tracking from ``t0`` on."""
    seg = TrajectorySegment(agent, t0, tf, goal.shifted(t0), TRACK, goal.id, 0.0)
    if math.isfinite(tf):
        seg = seg.truncated(tf)
    return seg


# ---------------------------------------------------------------------------
# checks


@dataclass
class ConstraintReport:
    v_violations: list = field(default_factory=list)  # (t_start, t_end, peak speed)
    u_violations: list = field(default_factory=list)  # (t_start, t_end, peak control)
    safety_violations: list = field(default_factory=list)  # (other agent, t_start, t_end, min distance)
    min_separation: float = math.inf
    responsible: int | None = None  # agent that must keep the separation

    @property
    def feasible(self) -> bool:
        return not (self.v_violations or self.u_violations or self.safety_violations)

    def __bool__(self):
        return not self.feasible

    def merge(self, other: "ConstraintReport") -> "ConstraintReport":
        return ConstraintReport(
            self.v_violations + other.v_violations,
            self.u_violations + other.u_violations,
            self.safety_violations + other.safety_violations,
            min(self.min_separation, other.min_separation),
            self.responsible if self.responsible is not None else other.responsible,
        )


def _excess_intervals(norm2, limit, lo, hi):
    """Sub-intervals of ``[lo, hi]`` where ``sqrt(norm2(tau)) > limit``, with peaks."""
    if not math.isfinite(limit) or hi <= lo:
        return []
    f = np.array(norm2, dtype=float)
    f[0] -= limit * limit
    f = np.ascontiguousarray(f)
    if np.all(f == 0.0):
        return []
    knots = [lo] + [r for r in kernels.real_roots(f, lo, hi) if lo < r < hi] + [hi]
    thresh = 1e-12 * limit * limit
    out = []
    for a, b in zip(knots[:-1], knots[1:]):
        if kernels.polyval(f, 0.5 * (a + b)) <= thresh:
            continue
        neg = np.ascontiguousarray(-np.asarray(norm2, dtype=float))
        peak2, _ = kernels.min_on_interval(neg, a, b)
        peak = math.sqrt(max(-peak2, 0.0))
        if out and out[-1][1] == a:
            out[-1] = (out[-1][0], b, max(out[-1][2], peak))
        else:
            out.append((a, b, peak))
    return out


def check_limits(seg: TrajectorySegment, v_max: float, u_max: float, until: float | None = None) -> ConstraintReport:
    """Exact speed/control limit check on ``[seg.t0, min(seg.tf, until)]``."""
    end = seg.tf if until is None else min(seg.tf, until)
    if not math.isfinite(end):
        raise ValueError("open-ended segment needs an explicit end time")
    dur = end - seg.t0
    shift = lambda iv: [(seg.t0 + a, seg.t0 + b, pk) for a, b, pk in iv]
    return ConstraintReport(
        v_violations=shift(_excess_intervals(_norm2_poly(seg.vel_coeffs), v_max, 0.0, dur)),
        u_violations=shift(_excess_intervals(_norm2_poly(seg.acc_coeffs), u_max, 0.0, dur)),
    )


def _as_path(x) -> list[TrajectorySegment]:
    if isinstance(x, TrajectorySegment):
        return [x]
    return list(x)


def _piece_at(path, t):
    for seg in path:
        if seg.t0 <= t < seg.tf:
            return seg
    last = path[-1]
    if t >= last.t0 and t <= last.tf:
        return last
    return None


def separation_pieces(path_i, path_j, t_a: float, t_b: float):
    """Yield ``(lo, hi, d2_poly_in_(t - lo))`` over the common time window."""
    pi, pj = _as_path(path_i), _as_path(path_j)
    lo = max(t_a, pi[0].t0, pj[0].t0)
    hi = min(t_b, pi[-1].tf, pj[-1].tf)
    if not hi > lo:
        return
    cuts = sorted({lo, hi} | {s.t0 for s in pi + pj if lo < s.t0 < hi} | {s.tf for s in pi + pj if lo < s.tf < hi})
    for a, b in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (a + b)
        si, sj = _piece_at(pi, mid), _piece_at(pj, mid)
        if si is None or sj is None:
            continue
        ci, cj = si.rebased(a), sj.rebased(a)
        rel = np.zeros((max(ci.shape[0], cj.shape[0]), 2))
        rel[: ci.shape[0]] += ci
        rel[: cj.shape[0]] -= cj
        yield a, b, _norm2_poly(rel)


def check_safety(seg_i, seg_j, R: float, horizon: tuple[float, float] | float | None = None,
                 i_has_priority: bool | None = None) -> ConstraintReport:
    """Exact minimum-separation check between two trajectories.

    ``seg_i``/``seg_j`` are segments or lists of consecutive segments. With
    ``i_has_priority`` given, the report is attributed to the lower-priority
    agent (the one that must keep ``d >= 2R``) and names the other agent.
    """
    pi, pj = _as_path(seg_i), _as_path(seg_j)
    if horizon is None:
        t_a, t_b = -math.inf, math.inf
    elif isinstance(horizon, tuple):
        t_a, t_b = horizon
    else:
        t_a, t_b = -math.inf, float(horizon)
    id_i, id_j = pi[0].agent, pj[0].agent
    if i_has_priority is None:
        responsible, other = None, id_j
    elif i_has_priority:
        responsible, other = id_j, id_i
    else:
        responsible, other = id_i, id_j
    report = ConstraintReport(responsible=responsible)
    limit2 = (2.0 * R) ** 2
    current = None
    for a, b, d2 in separation_pieces(pi, pj, t_a, t_b):
        d2 = np.ascontiguousarray(d2)
        dmin2, _ = kernels.min_on_interval(d2, 0.0, b - a)
        report.min_separation = min(report.min_separation, math.sqrt(max(dmin2, 0.0)))
        if dmin2 >= limit2:
            current = None
            continue
        f = d2.copy()
        f[0] -= limit2
        knots = [0.0] + [r for r in kernels.real_roots(f, 0.0, b - a) if 0.0 < r < b - a] + [b - a]
        for x, y in zip(knots[:-1], knots[1:]):
            if kernels.polyval(f, 0.5 * (x + y)) >= 0.0:
                current = None
                continue
            m2, _ = kernels.min_on_interval(d2, x, y)
            m = math.sqrt(max(m2, 0.0))
            if current is not None and report.safety_violations[current][2] == a + x:
                o, s, _, mm = report.safety_violations[current]
                report.safety_violations[current] = (o, s, a + y, min(mm, m))
            else:
                report.safety_violations.append((other, a + x, a + y, m))
                current = len(report.safety_violations) - 1
    return report


# ---------------------------------------------------------------------------
# repair


@dataclass
class RepairContext:
    goal: GoalTrajectory
    v_max: float = math.inf
    u_max: float = math.inf
    R: float = 0.1
    t_min: float = 1e-3
    t_max: float = 1e4
    higher_priority: Sequence = ()  # committed paths (lists of segments) of agents with priority
    tail: float = 0.5
    hold_step: float = HOLD_STEP
    max_hold: float = MAX_HOLD
    factors: Sequence[float] = DILATION_FACTORS


@dataclass
class RepairResult:
    ok: bool
    segments: list
    strategy: str
    detail: str = ""
    report: ConstraintReport | None = None

    @property
    def segment(self) -> TrajectorySegment:
        return self.segments[-1]


def _with_tracking(segs, goal, tail):
    end = segs[-1].tf
    return list(segs) + [track_segment(segs[0].agent, goal, end, end + tail)]


def _safety_against(path, ctx: RepairContext) -> ConstraintReport:
    report = ConstraintReport(responsible=path[0].agent)
    for other in ctx.higher_priority:
        other = _as_path(other)
        end = max(path[-1].tf, other[-1].tf)
        r = check_safety(path, other, ctx.R, (path[0].t0, end), i_has_priority=False)
        report = report.merge(r)
    return report


def _dilate(seg: TrajectorySegment, ctx: RepairContext):
    start = seg.state(seg.t0)
    for s in ctx.factors:
        cand = plan_unconstrained(start, ctx.goal, seg.duration * s, seg.t0)
        rep = check_limits(cand, ctx.v_max, ctx.u_max)
        if rep.feasible:
            return cand, s
    return None, None


def repair_trajectory(seg: TrajectorySegment, violations: ConstraintReport, context: RepairContext) -> RepairResult:
    """Non-optimal stand-in for constrained arcs.

    1. Speed/control violations: stretch the arrival time by the smallest
       factor in 1.1, 1.2, ..., 3.0 that clears both limits.
    2. Separation violations: brake to rest over 0.1 s, 0.2 s, ... before
       re-planning to the goal, until the plan clears every higher-priority
       path; the re-plan itself may be stretched as in step 1.

    Returns a failure result when neither clears within its bounds.
    """
    if violations is None or violations.feasible:
        raise RepairRefused("nothing to repair: constraint report is empty")
    ctx = context
    segs = [seg]
    strategy = []
    if violations.v_violations or violations.u_violations:
        fixed, s = _dilate(seg, ctx)
        if fixed is None:
            return RepairResult(False, [seg], "dilation", f"no factor up to {ctx.factors[-1]} clears limits",
                                check_limits(seg, ctx.v_max, ctx.u_max))
        segs = [fixed]
        strategy.append(f"dilation x{s}")
    safety = _safety_against(_with_tracking(segs, ctx.goal, ctx.tail), ctx) if ctx.higher_priority else ConstraintReport()
    if not safety.safety_violations:
        return RepairResult(True, segs, "+".join(strategy) or "none", report=safety)

    start = seg.state(seg.t0)
    n_steps = int(round(ctx.max_hold / ctx.hold_step))
    for k in range(1, n_steps + 1):
        delta = round(k * ctx.hold_step, 10)
        if math.hypot(*start.v) > ctx.u_max * delta:
            continue
        hold = hold_segment(start, seg.t0, delta, seg.goal)
        s1 = AgentState(start.id, hold.position(hold.tf), (0.0, 0.0))
        prof = minimize_energy(s1, ctx.goal, ctx.t_min, ctx.t_max, hold.tf)
        plan = plan_unconstrained(s1, ctx.goal, prof.t_star, hold.tf)
        if not check_limits(plan, ctx.v_max, ctx.u_max).feasible:
            plan, _ = _dilate(plan, ctx)
            if plan is None:
                continue
        cand = [hold, plan]
        rep = _safety_against(_with_tracking(cand, ctx.goal, ctx.tail), ctx)
        if not rep.safety_violations:
            strategy.append(f"hold {delta:g}s")
            return RepairResult(True, cand, "+".join(strategy), report=rep)
    return RepairResult(False, segs, "hold", f"no hold up to {ctx.max_hold:g}s clears separation", safety)
