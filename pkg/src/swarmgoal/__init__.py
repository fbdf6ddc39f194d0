"""Decentralized energy-optimal goal assignment for double-integrator swarms."""

from ._accel import backend
from .assignment import (
    BANNED,
    Assignment,
    CostMatrix,
    brute_force_assignment,
    build_cost_matrix,
    solve_assignment,
)
from .energy import (
    BoundaryCoefficients,
    EnergyProfile,
    boundary_coefficients,
    energy_at,
    energy_poly,
    minimize_energy,
    positive_real_roots,
)
from .protocol import (
    PriorityContext,
    ProtocolState,
    competing_set,
    convergence_audit,
    priority,
    resolve_conflicts,
)
from .simulation import RunMetrics, compare_fixed_T, emit_outputs, run_simulation, sweep_h
from .trajectory import (
    ConstraintReport,
    TrajectorySegment,
    check_limits,
    check_safety,
    plan_unconstrained,
    repair_trajectory,
)
from .worldmodel import (
    AgentState,
    GoalTrajectory,
    ScenarioConfig,
    distance,
    dump_scenario,
    eval_goal,
    load_scenario,
    neighborhood,
)

__version__ = "0.1.0"
