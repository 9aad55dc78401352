import math

import numpy as np
import pytest

from spotforward.costs import CostPath
from spotforward.picard import (PerturbationState, benchmark_for, dense_solve, lemma_bounds,
                                mu_bound, phi_thresholds, picard_step, risk_averse_paths, run_picard)
from spotforward.model import TimeGrid, ValidationError


@pytest.fixture(scope="module")
def bench():
    return benchmark_for(1.0, 0.5, 1.0, 1.0, TimeGrid.uniform(1.0, 256))


def test_zero_phi_gives_zero_state(bench):
    state, rep = run_picard(bench, 1.0, 0.0)
    assert rep.converged and rep.iterations == 1
    assert np.all(state.hat_mu == 0) and np.all(state.hat_Q == 0)


def test_zero_volatility_gives_zero_state(bench):
    state = picard_step(PerturbationState.zero(bench.grid, 0.0, 0.3), bench, 0.5)
    assert np.all(state.hat_mu == 0) and np.all(state.hat_S == 0)


def test_boundary_conditions(bench):
    state, rep = run_picard(bench, 1.0, 0.01)
    assert rep.converged
    assert state.hat_Q[0] == 0.0 and state.hat_S[-1] == 0.0
    assert state.hat_mu[-1] == pytest.approx(0.5 * state.hat_Q[-1], abs=1e-11)


def test_matches_dense_solve(bench):
    state, rep = run_picard(bench, 1.0, 0.01)
    ref = dense_solve(bench, 1.0, 0.01)
    assert np.max(np.abs(state.hat_mu - ref.hat_mu)) <= 1e-8
    assert np.max(np.abs(state.hat_Q - ref.hat_Q)) <= 1e-8
    assert np.max(np.abs(state.hat_S - ref.hat_S)) <= 1e-8


def test_dense_solve_random(rng):
    for _ in range(10):
        c = float(rng.uniform(0.8, 3.0))
        rho = float(rng.uniform(0.05, 0.7)) * c
        phi = float(rng.uniform(0, 0.1))
        b = benchmark_for(c, rho, float(rng.normal()), float(rng.normal()), TimeGrid.uniform(1.0, 128))
        sig = lambda t: 1.0 + 0.5 * np.sin(3 * t)  # noqa: E731
        state, rep = run_picard(b, sig, phi, max_iter=500)
        ref = dense_solve(b, sig, phi)
        assert rep.converged
        assert np.max(np.abs(state.hat_mu - ref.hat_mu)) <= 1e-8


def test_against_continuous_solution():
    # constant c and sigma: the two-point problem is a linear ODE with a
    # 2x2 matrix exponential; the trapezoid discretisation is second order
    from scipy.integrate import solve_bvp
    c, rho, phi = 1.0, 0.5, 0.05
    b = benchmark_for(c, rho, 1.0, 1.0, TimeGrid.uniform(1.0, 1024))
    state, _ = run_picard(b, 1.0, phi)
    Qbar = lambda t: np.interp(t, b.t, b.Q)  # noqa: E731

    def f(t, y):
        mu, Q = y
        return np.vstack([mu - phi * (Q + Qbar(t)), -mu / c])

    def bc(ya, yb):
        return np.array([ya[1], yb[0] - rho * yb[1]])

    t = np.linspace(0, 1, 201)
    sol = solve_bvp(f, bc, t, np.zeros((2, t.size)), tol=1e-10, max_nodes=100000)
    assert sol.success
    assert np.max(np.abs(sol.sol(b.t)[0] - state.hat_mu)) <= 1e-6


def test_thresholds_and_convergence(bench):
    phi1, phi2 = phi_thresholds(bench, 1.0, 1.0)
    assert phi1 > 0 and phi2 > 0
    state, rep = run_picard(bench, 1.0, min(phi1, phi2) / 2)
    assert rep.converged and rep.eventual_ratio < 1
    assert all(r > 0 for r in rep.ratios if r)


def test_phi1_linear_in_R(bench):
    a = phi_thresholds(bench, 1e-3, 1.0)[0]
    b = phi_thresholds(bench, 2e-3, 1.0)[0]
    assert b / a == pytest.approx(2.0, rel=1e-2)


def test_structural_condition(bench):
    b = benchmark_for(1.0, 1.5, 1.0, 1.0, TimeGrid.uniform(1.0, 64))
    with pytest.raises(ValidationError, match="structural condition violated"):
        phi_thresholds(b, 1.0, 1.0)


def test_mu_bound_and_linearity(bench):
    phi = min(phi_thresholds(bench, 1.0, 1.0)) / 2
    s1, _ = run_picard(bench, 1.0, phi)
    s2, _ = run_picard(bench, 1.0, phi / 2)
    n1, n2 = np.max(np.abs(s1.hat_mu)), np.max(np.abs(s2.hat_mu))
    assert n1 <= mu_bound(bench, 1.0, 1.0, phi)
    assert n1 / n2 == pytest.approx(2.0, rel=0.1)


def test_divergence_is_reported():
    b = benchmark_for(1.0, 15.0, 1.0, 1.0, TimeGrid.uniform(0.1, 256))
    state, rep = run_picard(b, 1.0, 0.05, max_iter=20)
    assert not rep.converged
    assert rep.eta < 0 and rep.phi_thresholds is None
    assert rep.ratios[-1] > 1


def test_shooting_gain(bench):
    _, rep = run_picard(bench, 1.0, 0.01)
    assert rep.gain_estimate <= 0.5 * 1.0 * 1.0 + 0.05


class TestLemmaBounds:
    def test_phi_zero(self):
        r = lemma_bounds(1.0, 1.0, 1.0, 1.0, 1.0, 0.0, TimeGrid(1.0, 1024))
        assert r.C_P == 1.0 and r.ok
        assert r.P.min() > 0 and r.P.max() <= 1.0 + 1e-15

    def test_reference_instance(self):
        g = TimeGrid(1.0, 1024)
        r = lemma_bounds(1.0, 1.0, 1.0, 1.0, 1.0, 0.1, g)
        assert r.C_P == pytest.approx(1.1, abs=1e-12)
        assert r.ok

    def test_comparison_direction(self):
        g = TimeGrid(1.0, 1024)
        P0 = risk_averse_paths(1.0, 1.0, 1.0, 1.0, 1.0, 0.0, g)[0]
        P1 = risk_averse_paths(1.0, 1.0, 1.0, 1.0, 1.0, 0.1, g)[0]
        assert np.all(P1 >= P0)

    def test_phi_zero_matches_benchmark(self):
        g = TimeGrid(1.0, 1024)
        P, Lam, Q = risk_averse_paths(0.7, 2.0, 1.0, 0.5, 1.0, 0.0, g)
        b = benchmark_for(0.7, 2.0, 1.0, 0.5, g)
        np.testing.assert_allclose(P, b.P, atol=1e-12)
        np.testing.assert_allclose(Lam, b.Lambda, atol=1e-11)
        np.testing.assert_allclose(Q, b.Q, atol=1e-10)

    def test_negative_phi(self):
        with pytest.raises(ValidationError):
            lemma_bounds(1.0, 1.0, 1.0, 1.0, 1.0, -0.1, TimeGrid(1.0, 64))

    def test_piecewise_cost(self):
        cost = CostPath.piecewise_constant([0.5], [0.5, 2.0])
        r = lemma_bounds(cost, 3.0, 1.0, -1.0, lambda t: 1 + t, 0.4, cost.grid(1.0, 1024))
        assert r.ok
