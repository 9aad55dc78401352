import math

import numpy as np
import pytest
from scipy.integrate import quad, solve_ivp

from spotforward.deterministic import (alpha_closed, beta_closed, delta_closed, large_rho_asymptotics,
                                       p_closed)
from spotforward.jump import (conditional_alpha, conditional_beta, conditional_path, expected_alpha,
                              expected_beta, normal_coefficients, normal_delta_voc,
                              stressed_coefficients, solve_jump)
from spotforward.model import RegimeSwitch, TimeGrid, ValidationError


def ivp_normal(cn, cs, lam, m, rho, T):
    """Raw-form normal-state ODEs, stressed state from closed forms."""
    def rhs(t, y):
        P, d = y
        Ps, ds = p_closed(t, cs, rho, T), delta_closed(t, cs, m, rho, T)
        return [P * (rho * P / cn + 1 + lam) - lam * Ps,
                d * (rho * P / cn + 1 + lam) - lam * ds - cn * m]
    sol = solve_ivp(rhs, (T, 0.0), [1.0, 0.0], method="DOP853", rtol=1e-12, atol=1e-14)
    return sol.y[0][-1], sol.y[1][-1]


def test_stressed_state_is_the_constant_solution():
    g = TimeGrid(1.0, 4096)
    P, d = stressed_coefficients(0.3, 2.0, 5.0, g)
    np.testing.assert_allclose(P, p_closed(g.knots, 0.3, 5.0, 1.0), atol=1e-10)
    np.testing.assert_allclose(d, delta_closed(g.knots, 0.3, 2.0, 5.0, 1.0), atol=1e-10)


@pytest.mark.parametrize("cn, cs, lam, m, rho", [
    (1.0, 2.0, 0.7, 1.0, 1.0),
    (0.06, 0.08, 3.0, 2.0, 0.06),
    (0.5, 0.9, 10.0, -1.0, 4.0),
])
def test_normal_state_against_ivp(cn, cs, lam, m, rho):
    g = TimeGrid(1.0, 4096)
    P, d = normal_coefficients(cn, cs, lam, m, rho, g)
    P0, d0 = ivp_normal(cn, cs, lam, m, rho, 1.0)
    assert P[0] == pytest.approx(P0, abs=1e-9)
    assert d[0] == pytest.approx(d0, abs=1e-9)


def test_zero_intensity_collapses_to_normal_constant():
    g = TimeGrid(1.0, 4096)
    co = solve_jump(RegimeSwitch(0.5, 3.0, 0.0), 1.0, 2.0, g)
    np.testing.assert_allclose(co.P_normal, p_closed(g.knots, 0.5, 2.0, 1.0), atol=1e-10)
    assert expected_beta(co) == pytest.approx(beta_closed(1, 0.5, 1.0, 2.0, 1), abs=1e-10)
    assert expected_alpha(co) == pytest.approx(alpha_closed(1, 0.5, 2.0, 1), abs=1e-10)


def test_equal_levels_collapse():
    g = TimeGrid(1.0, 4096)
    co = solve_jump(RegimeSwitch(0.5, 0.5, 4.0), 1.0, 2.0, g)
    assert co.P_normal[0] == pytest.approx(p_closed(0, 0.5, 2.0, 1), abs=1e-10)
    assert expected_beta(co) == pytest.approx(beta_closed(1, 0.5, 1.0, 2.0, 1), abs=1e-10)


def test_high_intensity_approaches_stressed():
    g = TimeGrid(1.0, 4096)
    co = solve_jump(RegimeSwitch(0.5, 1.5, 50.0), 1.0, 2.0, g)
    assert abs(co.P_normal[0] / p_closed(0, 1.5, 2.0, 1) - 1) < 0.02


def test_stressed_limit_rate_is_one_over_lambda():
    g = TimeGrid(1.0, 4096)
    gap = [abs(solve_jump(RegimeSwitch(0.5, 1.5, lam), 1.0, 2.0, g).delta_normal[0]
               / delta_closed(0, 1.5, 1.0, 2.0, 1) - 1) for lam in (200, 400)]
    assert gap[0] / gap[1] == pytest.approx(2.0, rel=0.05)


def test_homogeneous_supply():
    co = solve_jump(RegimeSwitch(0.5, 1.5, 2.0), 0.0, 2.0, TimeGrid(1.0, 512))
    assert np.all(co.delta_normal == 0) and np.all(co.delta_stress == 0)
    assert expected_beta(co) == 0.0


@pytest.mark.parametrize("rho", [0.06, 1.0, 1e3])
def test_variation_of_constants(rho):
    co = solve_jump(RegimeSwitch(0.02, 0.05, 2.0), 1.5, rho, TimeGrid(1.0, 4096))
    assert np.max(np.abs(normal_delta_voc(co) - co.delta_normal)) <= 1e-6


def test_expectation_identity():
    co = solve_jump(RegimeSwitch(0.3, 0.9, 1.7), 1.0, 3.0, TimeGrid(1.0, 4096))
    assert 1 - 3.0 * expected_alpha(co) == pytest.approx(math.e * co.P_normal[0], abs=1e-9)


def test_expectation_matches_adaptive_quadrature():
    co = solve_jump(RegimeSwitch(0.3, 0.9, 1.7), 1.0, 3.0, TimeGrid(1.0, 4096))
    lam = co.lam
    val = quad(lambda u: lam * math.exp(-lam * u) * co.conditional_at(u)[0], 0, 1.0,
               epsabs=1e-13, limit=200)[0]
    _, none = co.conditional_values()
    assert expected_beta(co) == pytest.approx(val + math.exp(-lam) * none, abs=1e-11)


def test_refinement_is_stable():
    cost = RegimeSwitch(0.06, 0.08, 2.0)
    a = expected_beta(solve_jump(cost, 2.0, 0.06, TimeGrid(1.0, 1024)))
    b = expected_beta(solve_jump(cost, 2.0, 0.06, TimeGrid(1.0, 4096)))
    assert abs(a - b) <= 1e-9 * max(1.0, abs(b))


class TestConditionalPath:
    @pytest.fixture(scope="class")
    @staticmethod
    def coeffs():
        return solve_jump(RegimeSwitch(0.4, 1.2, 1.0), 1.0, 2.0, TimeGrid(1.0, 2048))

    def test_no_jump(self, coeffs):
        p = conditional_path(None, coeffs)
        assert p.jump_time is None and np.all(p.realized_cost == 0.4)
        _, none = coeffs.conditional_values()
        assert conditional_beta(p) == pytest.approx(none, abs=1e-12)

    def test_jump_at_horizon_is_no_jump(self, coeffs):
        assert conditional_path(1.0, coeffs).jump_time is None

    def test_realized_fields(self, coeffs):
        p = conditional_path(0.37, coeffs)
        assert 0.37 in p.grid.breaks
        t = p.grid.knots
        assert np.all(p.realized_cost[t < 0.37] == 0.4)
        assert np.all(p.realized_cost[t >= 0.37] == 1.2)
        # stressed segment coincides with the stressed closed form
        late = t >= 0.37
        np.testing.assert_allclose(p.realized_P[late], p_closed(t[late], 1.2, 2.0, 1.0), atol=1e-10)

    @pytest.mark.parametrize("u", [0.05, 0.37, 0.8123])
    def test_direct_quadrature_matches_interpolated(self, coeffs, u):
        p = conditional_path(u, coeffs)
        assert conditional_beta(p) == pytest.approx(coeffs.conditional_at(u)[0], abs=1e-10)
        assert conditional_alpha(p) == pytest.approx(coeffs.conditional_at(u, "alpha")[0], abs=1e-10)

    def test_bad_jump_time(self, coeffs):
        with pytest.raises(ValidationError):
            conditional_path(-0.1, coeffs)
        with pytest.raises(ValidationError):
            conditional_path(1.5, coeffs)


def test_premium_identity_jump():
    from spotforward.equilibrium import venue_quote
    from spotforward.model import ConstantDemand, ModelParams, SupplySpec
    params = ModelParams(1.0, 2.0, 0.0, 0.3, ConstantDemand(1.5))
    q = venue_quote(params, RegimeSwitch(0.4, 1.2, 1.0), SupplySpec(1.0), grid=TimeGrid(1.0, 4096))
    assert q.premium_identity_error(2.0) <= 1e-10


def test_stress_delta_increases_with_intensity():
    g = TimeGrid(1.0, 2048)
    d = [normal_coefficients(0.06, 0.08, lam, 2.0, 0.06, g)[1][0] for lam in (0, 0.5, 2, 8)]
    assert all(a < b for a, b in zip(d, d[1:]))


def test_scaled_large_rho_for_normal_state():
    # when both levels grow with rho, the normal state approaches a combination
    # of the constant-cost limits; at lam=0 it is exactly the constant limit
    rho = 1e5
    co = solve_jump(RegimeSwitch(1.0, 2.0, 0.0), 1.0, rho, TimeGrid(1.0, 4096))
    lim = large_rho_asymptotics(1.0, 1.0, 1.0)
    assert abs(rho * math.e * co.P_normal[0] / lim[0] - 1) < 1e-4
    assert abs(co.delta_normal[0] / lim[2] - 1) < 1e-4


def test_validation():
    with pytest.raises(ValidationError):
        solve_jump(RegimeSwitch(-1.0, 1.0, 1.0), 1.0, 1.0, TimeGrid(1.0, 64))
    with pytest.raises(ValidationError):
        solve_jump(RegimeSwitch(1.0, 1.0, -1.0), 1.0, 1.0, TimeGrid(1.0, 64))
    with pytest.raises(ValidationError):
        stressed_coefficients(0.0, 1.0, 1.0, TimeGrid(1.0, 64))


def test_generic_conditional_beta_under_refinement():
    cost = RegimeSwitch(0.02, 0.10, 1.0)
    vals = [conditional_beta(conditional_path(0.5, solve_jump(cost, 1.0, 100.0, TimeGrid(1.0, n))))
            for n in (1024, 4096)]
    assert abs(vals[0] - vals[1]) <= 1e-6


def test_realized_H_continuous_nondecreasing():
    co = solve_jump(RegimeSwitch(0.02, 0.10, 1.0), 1.0, 100.0, TimeGrid(1.0, 2048))
    p = conditional_path(0.5, co)
    assert np.all(np.diff(p.realized_H) > 0)
    k = p.split
    slope_before = (p.realized_H[k] - p.realized_H[k - 1]) / (p.grid.knots[k] - p.grid.knots[k - 1])
    slope_after = (p.realized_H[k + 1] - p.realized_H[k]) / (p.grid.knots[k + 1] - p.grid.knots[k])
    assert slope_before > slope_after  # kink: normal P/c exceeds stressed P/c at the jump


def test_early_jump_is_nearly_stressed():
    co = solve_jump(RegimeSwitch(0.3, 0.9, 1.0), 1.0, 2.0, TimeGrid(1.0, 2048))
    p = conditional_path(1e-6, co)
    k = p.split
    assert p.grid.knots[k] == pytest.approx(1e-6, abs=1e-15)
    np.testing.assert_allclose(p.realized_P[k:], p_closed(p.grid.knots[k:], 0.9, 2.0, 1.0), atol=1e-10)


def test_scaled_stressed_asymptote():
    rho, c = 1e3, 0.5
    g = TimeGrid(1.0, 4096)
    P, _ = stressed_coefficients(c, 1.0, rho, g)
    t = g.knots[g.knots <= 0.9]
    lim = c * np.exp(t - 1) / (1 - np.exp(t - 1))
    assert np.max(np.abs(rho * P[: len(t)] / lim - 1)) <= 0.01


def test_scaled_normal_state_residual():
    rho, cn, cs, lam = 1e3, 0.5, 1.5, 2.0
    g = TimeGrid(1.0, 4096)
    co = solve_jump(RegimeSwitch(cn, cs, lam), 1.0, rho, g)
    t = g.knots
    x = rho * co.P_normal
    dx = np.gradient(x, t, edge_order=2)
    rhs = x * (x / cn + 1 + lam) - lam * cs * np.exp(t - 1) / (1 - np.exp(t - 1) + 1e-300)
    mask = t <= 0.9
    # the asymptotic relation holds up to O(1/rho) relative to the size of the terms
    rel = np.abs(dx[mask] - rhs[mask]) / (np.abs(x[mask] * (x[mask] / cn + 1 + lam)))
    assert np.max(rel) < 0.01
