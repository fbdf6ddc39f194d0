"""Unconstrained minimum-energy cost of reaching a polynomial goal, and its
global minimizer over the arrival time.

Time is measured in the planning frame: ``T`` is the duration from the agent's
current clock ``t0`` (absolute) to arrival, and the goal is evaluated at the
absolute time ``t0 + T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import NumericError
from .worldmodel import AgentState, GoalTrajectory, derivative_coeffs


@dataclass(frozen=True)
class BoundaryCoefficients:
    """Acceleration ``u(tau) = a * tau + b`` of the unconstrained arc."""

    a: np.ndarray
    b: np.ndarray
    arrival: float


@dataclass(frozen=True)
class EnergyProfile:
    alphas: np.ndarray
    t_star: float
    e_star: float

    def energy(self, T):
        """``sum_l alphas[l] * T**(l - 3)``."""
        T = np.asarray(T, dtype=float)
        return np.polynomial.polynomial.polyval(T, self.alphas) / T**3


def _check_T(T):
    if not (T > 0) or not math.isfinite(T):
        raise ValueError(f"arrival time must be positive and finite, got {T}")


def _goal_state(goal: GoalTrajectory, t: float):
    c = goal.coeffs
    d = derivative_coeffs(c)
    p = np.array([kernels.polyval(np.ascontiguousarray(c[:, 0]), t), kernels.polyval(np.ascontiguousarray(c[:, 1]), t)])
    v = np.array([kernels.polyval(np.ascontiguousarray(d[:, 0]), t), kernels.polyval(np.ascontiguousarray(d[:, 1]), t)])
    return p, v


def boundary_coefficients(state: AgentState, goal: GoalTrajectory, T: float, t0: float = 0.0) -> BoundaryCoefficients:
    _check_T(T)
    p_goal, v_goal = _goal_state(goal, t0 + T)
    dp = state.p - p_goal
    a = 12.0 / T**3 * dp + 6.0 / T**2 * (state.v + v_goal)
    b = -6.0 / T**2 * dp - 2.0 / T * (2.0 * state.v + v_goal)
    return BoundaryCoefficients(a, b, float(T))


def energy_from_coefficients(a, b, T):
    # a^2 T^3/3 + a.b T^2 + b^2 T, written as T(|b + aT/2|^2 + |a|^2 T^2/12) so
    # rounding cannot make it negative
    m = b + 0.5 * T * a
    return float(T * (m @ m + (a @ a) * T * T / 12.0))


def energy_at(state: AgentState, goal: GoalTrajectory, T: float, t0: float = 0.0) -> float:
    """Integral of ``|u|^2`` (no 1/2 factor) along the unconstrained arc of duration ``T``."""
    bc = boundary_coefficients(state, goal, T, t0)
    return energy_from_coefficients(bc.a, bc.b, bc.arrival)


def energy_poly(state: AgentState, goal: GoalTrajectory, t0: float = 0.0) -> np.ndarray:
    """Exact coefficients ``alpha`` with ``energy_at(T) == sum alpha[l] T**(l-3)``.

    With ``a T^3 = A(T)`` and ``b T^2 = B(T)`` both polynomials, the energy is
    ``(A.A/3 + A.B + B.B) / T^3``; the numerator is expanded term by term.
    """
    g = goal.shifted(t0)
    gv = derivative_coeffs(g)
    eta = g.shape[0] - 1
    alphas = np.zeros(max(2 * eta, 2) + 1)
    n = eta + 2
    for ax in range(2):
        dp = np.zeros(n)
        dp[: eta + 1] = -g[:, ax]
        dp[0] += state.p[ax]
        vsum = np.zeros(n)  # v0 + v*(T), one power higher: multiplied by T below
        vsum[1 : 1 + gv.shape[0]] = gv[:, ax]
        vsum[1] += state.v[ax]
        vsum2 = vsum.copy()
        vsum2[1] += state.v[ax]
        A = 12.0 * dp + 6.0 * vsum
        B = -6.0 * dp - 2.0 * vsum2
        num = np.convolve(A, A) / 3.0 + np.convolve(A, B) + np.convolve(B, B)
        k = min(num.shape[0], alphas.shape[0])
        if np.any(num[k:] != 0.0):
            raise NumericError("energy numerator exceeds its expected degree")
        alphas[:k] += num[:k]
    return alphas


def positive_real_roots(poly, lo: float, hi: float) -> list[float]:
    """All real roots of ``poly`` (ascending coefficients) in ``[lo, hi]``."""
    c = np.asarray(poly, dtype=float)
    if c.ndim != 1 or c.size == 0 or not np.any(c != 0.0):
        raise ValueError("zero polynomial has no isolated roots")
    if not np.all(np.isfinite(c)):
        raise NumericError("non-finite polynomial coefficient")
    if not lo < hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    return [float(r) for r in kernels.real_roots(np.ascontiguousarray(c), float(lo), float(hi))]


def critical_poly(alphas: np.ndarray) -> np.ndarray:
    """Numerator of ``dE/dT`` times ``T^4``: ``T P'(T) - 3 P(T)``."""
    l = np.arange(alphas.shape[0], dtype=float)
    return (l - 3.0) * alphas


def minimize_energy(
    state: AgentState,
    goal: GoalTrajectory,
    t_min: float = 1e-3,
    t_max: float = 1e4,
    t0: float = 0.0,
) -> EnergyProfile:
    """Global minimizer of the arrival-time energy on ``[t_min, t_max]``.

    Every stationary point of ``E`` is a root of the critical polynomial; ``E``
    is evaluated at all of them plus both endpoints and the smallest value wins
    (earliest time on exact ties).
    """
    if not (0 < t_min < t_max):
        raise ValueError(f"need 0 < t_min < t_max, got t_min={t_min}, t_max={t_max}")
    alphas = energy_poly(state, goal, t0)
    if not np.all(np.isfinite(alphas)):
        raise NumericError(f"non-finite energy coefficients for agent {state.id}, goal {goal.id}")
    q = critical_poly(alphas)
    candidates = [t_min]
    if np.any(q != 0.0):
        roots = kernels.real_roots(np.ascontiguousarray(q), float(t_min), float(t_max))
        for r in roots:
            resid = abs(kernels.polyval(q, r))
            scale = kernels.polyval_abs(q, r)
            if not math.isfinite(r) or resid > 1e-6 * scale:
                raise NumericError(
                    f"root finder did not converge for agent {state.id}, goal {goal.id}: "
                    f"t={r!r}, |Q(t)|={resid:.3e}, scale={scale:.3e}"
                )
            candidates.append(float(r))
    candidates.append(t_max)
    best_t = candidates[0]
    best_e = energy_at(state, goal, best_t, t0)
    for t in candidates[1:]:
        e = energy_at(state, goal, t, t0)
        if e < best_e:
            best_t, best_e = t, e
    alphas.setflags(write=False)
    return EnergyProfile(alphas=alphas, t_star=float(best_t), e_star=float(best_e))
