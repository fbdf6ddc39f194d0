"""Agents, goal trajectories, scenario files and neighborhood queries."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from math import comb
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import yaml

from .errors import ScenarioParseError, ScenarioValidationError, UnknownAgentError
from .kernels import polyval

DEFAULT_T_MIN = 1e-3
DEFAULT_T_MAX = 1e4
DEFAULT_DT_SCAN = 0.01


def vec2(x) -> np.ndarray:
    """Coerce ``x`` to a finite float64 array of shape (2,)."""
    arr = np.array(x, dtype=float).reshape(-1)
    if arr.shape != (2,):
        raise ValueError(f"expected a 2-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite vector component: {arr.tolist()}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AgentState:
    id: int
    p: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", vec2(self.p))
        object.__setattr__(self, "v", vec2(self.v))

    def __eq__(self, other):
        if not isinstance(other, AgentState):
            return NotImplemented
        return (
            self.id == other.id
            and np.array_equal(self.p, other.p)
            and np.array_equal(self.v, other.v)
        )

    def __hash__(self):
        return hash((self.id, self.p.tobytes(), self.v.tobytes()))

    def key(self):
        """Hashable exact fingerprint of the kinematic state."""
        return (self.p.tobytes(), self.v.tobytes())


@dataclass(frozen=True, eq=False)
class GoalTrajectory:
    """Polynomial goal position ``p(t) = sum_l coeffs[l] * t**l``.

    ``coeffs`` has shape ``(degree + 1, 2)``. The degree is not checked here
    (scenario validation enforces degree >= 2) so static goals can still be
    built directly for testing the energy formulas.
    """

    id: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 2 or c.shape[1] != 2 or c.shape[0] < 1:
            raise ValueError(f"goal {self.id}: coeffs must have shape (degree+1, 2)")
        if not np.all(np.isfinite(c)):
            raise ValueError(f"goal {self.id}: non-finite coefficient")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def __eq__(self, other):
        if not isinstance(other, GoalTrajectory):
            return NotImplemented
        return self.id == other.id and np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash((self.id, self.coeffs.tobytes()))

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    def position(self, t: float) -> np.ndarray:
        return np.array([polyval(self.coeffs[:, 0], t), polyval(self.coeffs[:, 1], t)])

    def velocity(self, t: float) -> np.ndarray:
        d = derivative_coeffs(self.coeffs)
        return np.array([polyval(d[:, 0], t), polyval(d[:, 1], t)])

    def acceleration(self, t: float) -> np.ndarray:
        d = derivative_coeffs(derivative_coeffs(self.coeffs))
        return np.array([polyval(d[:, 0], t), polyval(d[:, 1], t)])

    def shifted(self, t0: float) -> np.ndarray:
        """Coefficients of ``tau -> p(t0 + tau)`` (binomial rebasing)."""
        return shift_coeffs(self.coeffs, t0)


def derivative_coeffs(c: np.ndarray) -> np.ndarray:
    """Coefficient array of the time derivative (keeps at least one row)."""
    if c.shape[0] == 1:
        return np.zeros_like(c)
    k = np.arange(1, c.shape[0], dtype=float)
    return c[1:] * k[:, None]


def shift_coeffs(c: np.ndarray, t0: float) -> np.ndarray:
    if t0 == 0.0:
        return np.array(c, dtype=float)
    n = c.shape[0]
    out = np.zeros_like(c, dtype=float)
    for l in range(n):
        for m in range(l + 1):
            out[m] += comb(l, m) * t0 ** (l - m) * c[l]
    return out


def eval_goal(g: GoalTrajectory, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Position and exact analytic velocity of goal ``g`` at time ``t``."""
    if t < 0:
        raise ValueError("goal trajectories are defined for t >= 0")
    return g.position(t), g.velocity(t)


def distance(a: AgentState, b: AgentState) -> float:
    return float(math.hypot(*(a.p - b.p)))


@dataclass
class ScenarioConfig:
    agents: list[AgentState]
    goals: list[GoalTrajectory]
    h: float = math.inf
    R: float = 0.1
    v_max: float = math.inf
    u_max: float = math.inf
    t_min: float = DEFAULT_T_MIN
    t_max: float = DEFAULT_T_MAX
    dt_scan: float = DEFAULT_DT_SCAN
    seed: int = 0
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def N(self) -> int:
        return len(self.agents)

    @property
    def M(self) -> int:
        return len(self.goals)

    def agent(self, i: int) -> AgentState:
        for a in self.agents:
            if a.id == i:
                return a
        raise UnknownAgentError(f"no agent with id {i} in scenario")

    def goal(self, k: int) -> GoalTrajectory:
        for g in self.goals:
            if g.id == k:
                return g
        raise KeyError(f"no goal with id {k} in scenario")

    def replace(self, **changes) -> "ScenarioConfig":
        fields = dict(
            agents=list(self.agents),
            goals=list(self.goals),
            h=self.h,
            R=self.R,
            v_max=self.v_max,
            u_max=self.u_max,
            t_min=self.t_min,
            t_max=self.t_max,
            dt_scan=self.dt_scan,
            seed=self.seed,
            extra=dict(self.extra),
        )
        fields.update(changes)
        return ScenarioConfig(**fields)

    def validate(self) -> "ScenarioConfig":
        """Check every scenario invariant; raise ``ScenarioValidationError``."""
        if self.N == 0:
            raise ScenarioValidationError("scenario has no agents")
        if self.M < self.N:
            raise ScenarioValidationError(f"M >= N violated (M={self.M}, N={self.N})")
        ids = [a.id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ScenarioValidationError("agent ids are not unique")
        gids = [g.id for g in self.goals]
        if len(set(gids)) != len(gids):
            raise ScenarioValidationError("goal ids are not unique")
        for g in self.goals:
            if g.degree < 2:
                raise ScenarioValidationError(f"goal degree η < 2 (goal {g.id} has degree {g.degree})")
        for name in ("h", "R", "v_max", "u_max", "t_min", "t_max", "dt_scan"):
            val = getattr(self, name)
            if math.isnan(val) or val <= 0:
                raise ScenarioValidationError(f"parameter {name} must be positive (got {val})")
        if self.h < 4 * self.R:
            raise ScenarioValidationError(f"h >= 4R violated (h={self.h}, R={self.R})")
        if not math.isfinite(self.t_min) or self.t_max <= self.t_min:
            raise ScenarioValidationError("t_max > t_min > 0 violated")
        for a in self.agents:
            speed = float(np.hypot(*a.v))
            if speed > self.v_max:
                raise ScenarioValidationError(f"agent {a.id} initial speed {speed} exceeds v_max")
        for x in range(len(self.agents)):
            for y in range(x + 1, len(self.agents)):
                d = distance(self.agents[x], self.agents[y])
                if d < 2 * self.R:
                    raise ScenarioValidationError(
                        f"initial overlap < 2R between agents {self.agents[x].id} "
                        f"and {self.agents[y].id} (d={d:.6g})"
                    )
        return self


# relative slack on the horizon test: agents holding a constant distance equal
# to h (e.g. tracking goals spaced exactly h apart) must not flicker in and out
NEIGHBOR_RTOL = 1e-9


def within_horizon(d, h):
    return d <= h * (1.0 + NEIGHBOR_RTOL)


def neighborhood(world, i: int, t: float | None = None, positions: Mapping[int, np.ndarray] | None = None) -> set[int]:
    """Agents within the sensing horizon of agent ``i`` (``i`` included).

    ``world`` is a ``ScenarioConfig`` (positions taken from its agents) or any
    object with ``h`` and a ``positions(t)`` method returning ``{id: p}``.
    """
    if positions is None:
        if hasattr(world, "positions"):
            positions = world.positions(t)
        else:
            positions = {a.id: a.p for a in world.agents}
    if i not in positions:
        raise UnknownAgentError(f"no agent with id {i} in scenario")
    h = world.h
    pi = positions[i]
    return {j for j, pj in positions.items() if within_horizon(math.hypot(*(pj - pi)), h)}


# ---------------------------------------------------------------------------
# scenario files


def random_agents(n: int, box: Sequence[float], R: float, seed: int, max_tries: int = 100_000) -> list[AgentState]:
    """Uniform positions in ``box = [xmin, ymin, xmax, ymax]`` at rest, pairwise >= 2R."""
    xmin, ymin, xmax, ymax = (float(b) for b in box)
    rng = np.random.default_rng(seed)
    pts: list[np.ndarray] = []
    tries = 0
    while len(pts) < n:
        tries += 1
        if tries > max_tries:
            raise ScenarioValidationError(f"could not place {n} agents with separation 2R in box {box}")
        p = rng.uniform((xmin, ymin), (xmax, ymax))
        if all(np.hypot(*(p - q)) >= 2 * R for q in pts):
            pts.append(p)
    return [AgentState(k + 1, p, (0.0, 0.0)) for k, p in enumerate(pts)]


def _num(x, name):
    if isinstance(x, str):
        s = x.strip().lower()
        if s in ("inf", "+inf", "infinity"):
            return math.inf
        try:
            return float(s)
        except ValueError:
            raise ScenarioValidationError(f"parameter {name}: not a number: {x!r}") from None
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ScenarioValidationError(f"parameter {name}: not a number: {x!r}")
    return float(x)


_PARAM_DEFAULTS = {
    "h": math.inf,
    "R": 0.1,
    "v_max": math.inf,
    "u_max": math.inf,
    "t_min": DEFAULT_T_MIN,
    "t_max": DEFAULT_T_MAX,
    "dt_scan": DEFAULT_DT_SCAN,
}


def scenario_from_dict(data: Mapping) -> ScenarioConfig:
    if not isinstance(data, Mapping):
        raise ScenarioParseError("scenario must be a mapping with keys agents, goals, params")
    params = dict(data.get("params") or {})
    unknown = set(params) - set(_PARAM_DEFAULTS) - {"seed"}
    if unknown:
        raise ScenarioValidationError(f"unknown params: {sorted(unknown)}")
    kw = {k: _num(params.get(k, d), k) for k, d in _PARAM_DEFAULTS.items()}
    seed = int(params.get("seed", 0))

    try:
        goals = [
            GoalTrajectory(int(g["id"]), np.array(g["coeffs"], dtype=float))
            for g in data.get("goals") or []
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioValidationError(f"malformed goal entry: {exc}") from exc

    raw_agents = data.get("agents") or []
    extra = {}
    if isinstance(raw_agents, Mapping):
        # generated placement: {random: N, box: [xmin, ymin, xmax, ymax]}
        try:
            n = int(raw_agents["random"])
            box = [float(b) for b in raw_agents["box"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioValidationError(f"malformed random agent block: {exc}") from exc
        agents = random_agents(n, box, kw["R"], seed)
        extra["generated_from"] = {"random": n, "box": box}
    else:
        try:
            agents = [
                AgentState(int(a["id"]), a["p"], a.get("v", (0.0, 0.0)))
                for a in raw_agents
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioValidationError(f"malformed agent entry: {exc}") from exc
    cfg = ScenarioConfig(agents=agents, goals=goals, seed=seed, extra=extra, **kw)
    return cfg.validate()


def load_scenario(source) -> ScenarioConfig:
    """Parse and validate a scenario.

    ``source`` may be a path, YAML/JSON text, or an already-parsed mapping.
    """
    if isinstance(source, Mapping):
        return scenario_from_dict(source)
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).is_file()):
        text = Path(source).read_text()
    else:
        text = str(source)
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioParseError(f"scenario is not valid YAML/JSON: {exc}") from exc
    return scenario_from_dict(data)


def _param_out(x: float):
    return "inf" if x == math.inf else x


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "agents": [
            {"id": a.id, "p": [float(a.p[0]), float(a.p[1])], "v": [float(a.v[0]), float(a.v[1])]}
            for a in cfg.agents
        ],
        "goals": [{"id": g.id, "coeffs": g.coeffs.tolist()} for g in cfg.goals],
        "params": {
            "h": _param_out(cfg.h),
            "R": cfg.R,
            "v_max": _param_out(cfg.v_max),
            "u_max": _param_out(cfg.u_max),
            "t_min": cfg.t_min,
            "t_max": cfg.t_max,
            "dt_scan": cfg.dt_scan,
            "seed": cfg.seed,
        },
    }


def dump_scenario(cfg: ScenarioConfig) -> str:
    """Serialize as JSON (a YAML subset, so ``load_scenario`` reads it back)."""
    return json.dumps(scenario_to_dict(cfg), indent=2)


def goals_from_velocity(offsets: Iterable[Sequence[float]], velocity_coeffs: Sequence[Sequence[float]]) -> list[GoalTrajectory]:
    """Goals sharing one velocity polynomial, differing by their position at t=0.

    ``velocity_coeffs[l]`` is the (x, y) coefficient of ``t**l`` in the velocity.
    """
    vel = np.array(velocity_coeffs, dtype=float)
    k = np.arange(1, vel.shape[0] + 1, dtype=float)
    tail = vel / k[:, None]
    goals = []
    for n, off in enumerate(offsets):
        coeffs = np.vstack([np.asarray(off, dtype=float)[None, :], tail])
        goals.append(GoalTrajectory(n + 1, coeffs))
    return goals
