import math

import numpy as np
import pytest
from scipy.integrate import quad

from swarmgoal.energy import (
    boundary_coefficients,
    critical_poly,
    energy_at,
    energy_poly,
    minimize_energy,
    positive_real_roots,
)
from swarmgoal.errors import NumericError
from swarmgoal.worldmodel import AgentState, GoalTrajectory

from .conftest import random_instance


def cubic_oracle(state, goal, T, t0=0.0):
    """Solve for the cubic x(tau) matching both boundary states, then integrate x''^2."""
    M = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [1, T, T**2, T**3], [0, 1, 2 * T, 3 * T**2]], dtype=float)
    pg, vg = goal.position(t0 + T), goal.velocity(t0 + T)
    total = 0.0
    for ax in range(2):
        c = np.linalg.solve(M, [state.p[ax], state.v[ax], pg[ax], vg[ax]])
        total += quad(lambda s: (2 * c[2] + 6 * c[3] * s) ** 2, 0, T, epsabs=0, epsrel=1e-13)[0]
    return total


def test_static_goal_unit_time_coefficients():
    st = AgentState(1, (0, 0), (0, 0))
    g = GoalTrajectory(1, [[1, 0], [0, 0], [0, 0]])
    bc = boundary_coefficients(st, g, 1.0)
    assert bc.a.tolist() == [-12.0, 0.0]
    assert bc.b.tolist() == [6.0, 0.0]
    assert energy_at(st, g, 1.0) == pytest.approx(12.0, rel=1e-15)


def test_static_goal_energy_scales_inverse_cube():
    st = AgentState(1, (0, 0), (0, 0))
    g = GoalTrajectory(1, [[1, 0], [0, 0], [0, 0]])
    for T in (0.5, 2.0, 7.0):
        assert energy_at(st, g, T) == pytest.approx(12.0 / T**3, rel=1e-14)


def test_parabola_goal_alphas(rest_origin, parabola_goal):
    np.testing.assert_allclose(energy_poly(rest_origin, parabola_goal), [12, 0, 0, 0, 4], atol=1e-13)
    for T in (0.3, 1.0, 4.0):
        assert energy_at(rest_origin, parabola_goal, T) == pytest.approx(12 / T**3 + 4 * T, rel=1e-14)


def test_parabola_goal_minimizer(rest_origin, parabola_goal):
    prof = minimize_energy(rest_origin, parabola_goal)
    assert abs(prof.t_star - math.sqrt(3)) <= 1e-8
    assert abs(prof.e_star - 16 / math.sqrt(3)) <= 1e-6


def test_energy_matches_quadrature_oracle():
    rng = np.random.default_rng(11)
    for _ in range(40):
        st, g = random_instance(rng)
        T = float(rng.uniform(0.2, 6.0))
        t0 = float(rng.uniform(0, 2))
        assert energy_at(st, g, T, t0) == pytest.approx(cubic_oracle(st, g, T, t0), rel=1e-9, abs=1e-12)


def test_alpha_expansion_matches_direct_energy():
    rng = np.random.default_rng(12)
    for _ in range(200):
        st, g = random_instance(rng)
        t0 = float(rng.uniform(0, 3))
        al = energy_poly(st, g, t0)
        for T in rng.uniform(0.05, 20, 3):
            direct = energy_at(st, g, T, t0)
            scale = np.polynomial.polynomial.polyval(T, np.abs(al)) / T**3
            assert abs(np.polynomial.polynomial.polyval(T, al) / T**3 - direct) <= 1e-11 * (1 + scale)


def test_minimizer_beats_dense_grid():
    rng = np.random.default_rng(13)
    grid = np.logspace(-3, 4, 20001)
    for _ in range(60):
        st, g = random_instance(rng)
        prof = minimize_energy(st, g)
        e_grid = prof.energy(grid)
        assert prof.e_star <= e_grid.min() + 1e-6 * (1 + prof.e_star)
        assert prof.energy(prof.t_star) == pytest.approx(prof.e_star, rel=1e-9, abs=1e-12)


def test_degenerate_start_on_goal_picks_t_min():
    # agent already on the goal with its velocity: the constant-acceleration
    # goal still costs energy, so the cost rises with T from zero
    g = GoalTrajectory(1, [[0, 0], [0, 0], [1, 0]])
    st = AgentState(1, (0, 0), (0, 0))
    al = energy_poly(st, g)
    np.testing.assert_allclose(al[:3], 0.0, atol=1e-15)
    prof = minimize_energy(st, g, t_min=1e-3)
    assert prof.t_star == 1e-3


def test_scaling_positions_scales_energy_quadratically():
    rng = np.random.default_rng(14)
    for _ in range(30):
        st, g = random_instance(rng)
        s = float(rng.uniform(0.1, 10))
        st2 = AgentState(1, s * st.p, s * st.v)
        g2 = GoalTrajectory(1, s * g.coeffs)
        p1, p2 = minimize_energy(st, g), minimize_energy(st2, g2)
        assert p2.e_star == pytest.approx(s * s * p1.e_star, rel=1e-9, abs=1e-14)
        assert p2.energy(p1.t_star) == pytest.approx(p2.e_star, rel=1e-9, abs=1e-14)


def test_frame_shift_matches_shifted_goal():
    rng = np.random.default_rng(15)
    for _ in range(30):
        st, g = random_instance(rng)
        t0 = float(rng.uniform(0.1, 3))
        a = minimize_energy(st, g, t0=t0)
        b = minimize_energy(st, GoalTrajectory(1, g.shifted(t0)))
        assert a.e_star == pytest.approx(b.e_star, rel=1e-9, abs=1e-14)


def test_minimizer_is_bit_stable():
    st, g = random_instance(np.random.default_rng(16))
    runs = {(p.t_star, p.e_star) for p in (minimize_energy(st, g) for _ in range(5))}
    assert len(runs) == 1


def test_blow_up_at_both_ends():
    rng = np.random.default_rng(17)
    for _ in range(100):
        st, g = random_instance(rng)
        prof = minimize_energy(st, g)
        al = prof.alphas
        if al[0] > 0 and al[-1] > 0:
            assert prof.energy(1e-4) > prof.e_star
            assert prof.energy(1e5) > prof.e_star


def test_critical_poly_vanishes_at_interior_minimizer(rest_origin, parabola_goal):
    q = critical_poly(energy_poly(rest_origin, parabola_goal))
    assert np.polynomial.polynomial.polyval(math.sqrt(3), q) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize(
    "poly, lo, hi, expected",
    [
        ([-6, 11, -6, 1], 0, 10, [1, 2, 3]),
        ([1, 0, 1], -5, 5, []),
        ([-3, 0, 1], 0, 5, [math.sqrt(3)]),
        ([1, -2, 1], 0, 5, [1]),
    ],
)
def test_real_roots_examples(poly, lo, hi, expected):
    roots = positive_real_roots(poly, lo, hi)
    assert len(roots) == len(expected)
    for r, e in zip(roots, expected):
        assert r == pytest.approx(e, abs=1e-8)


def test_real_roots_against_numpy_on_random_cubics():
    rng = np.random.default_rng(18)
    for _ in range(200):
        rts = np.sort(rng.uniform(0.1, 9.0, 3))
        if np.min(np.diff(rts)) < 1e-3:
            continue
        poly = np.polynomial.polynomial.polyfromroots(rts) * rng.uniform(0.5, 2)
        got = positive_real_roots(poly, 0.0, 10.0)
        np.testing.assert_allclose(got, rts, atol=1e-9)


def test_real_roots_rejects_zero_polynomial():
    with pytest.raises(ValueError):
        positive_real_roots([0.0, 0.0], 0, 1)


def test_real_roots_rejects_non_finite():
    with pytest.raises(NumericError):
        positive_real_roots([1.0, np.nan], 0, 1)


def test_minimize_rejects_bad_interval(rest_origin, parabola_goal):
    with pytest.raises(ValueError):
        minimize_energy(rest_origin, parabola_goal, t_min=1.0, t_max=0.5)


def test_energy_rejects_non_positive_T(rest_origin, parabola_goal):
    with pytest.raises(ValueError):
        energy_at(rest_origin, parabola_goal, 0.0)
