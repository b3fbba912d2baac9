"""Tests for the change of variables u = a·w and the linear solvers Υ, Υ^K"""

import numpy as np
import pytest

from alarms import KTooSmallError, PreconditionError, ResolutionError, TruncationError
from diffeo import (
    U_map,
    W_map,
    a_lipschitz_probe,
    a_time_derivative,
    collocation_solve_aK,
    contraction_probe,
    find_K0,
    forward_a,
    inverse_a,
    periodic_antiderivative,
    random_smooth_field,
    rough_profile,
    upsilon,
    upsilon_K,
    value_at_minus_pi,
    w1inf,
    w1inf_bounds,
)
from rda_dynamics import integrate
from spectral_core import FourierField, derivative, pointwise_apply, sobolev_norm


@pytest.fixture
def smooth_u(rng):
    return random_smooth_field(rng, 32, 1.0)


@pytest.fixture
def phi_psi():
    phi = FourierField.from_modes({0: 0.4, 1: 0.15, -1: 0.15, 2: 0.05j, -2: -0.05j}, 24)
    psi = FourierField.from_modes({0: 1.0, 1: 0.25, -1: 0.25}, 24)
    return phi, psi


def _mean_zero_source(N_max):
    return FourierField.from_modes({1: 0.5, -1: 0.5, 3: 0.2j, -3: -0.2j}, N_max)


class TestForwardMap:
    def test_normalized_at_minus_pi(self, smooth_u, sine_advection):
        result = forward_a(smooth_u, 8, sine_advection)
        assert result.a_at_minus_pi == pytest.approx(1.0, abs=1e-10)
        assert result.positive
        assert result.a.is_real()

    def test_heat_factor_is_one(self, smooth_u, linear_heat):
        result = forward_a(smooth_u, 8, linear_heat)
        np.testing.assert_allclose(result.a.coeffs, FourierField.from_modes({0: 1.0}, 32).coeffs, atol=1e-14)

    def test_factor_derivative(self, smooth_u, sine_advection):
        result = forward_a(smooth_u, 8, sine_advection)
        np.testing.assert_allclose(derivative(result.a).coeffs, result.dx_a.coeffs, atol=1e-10)
        np.testing.assert_allclose(derivative(result.a, 2).coeffs, result.dxx_a.coeffs, atol=1e-9)

    def test_a_times_a_inv(self, smooth_u, sine_advection):
        result = forward_a(smooth_u, 8, sine_advection)
        one = pointwise_apply(result.a, result.a_inv, fn=lambda a, b: a * b)
        np.testing.assert_allclose(one.coeffs, FourierField.from_modes({0: 1.0}, 32).coeffs, atol=1e-10)

    def test_needs_scalar_field(self, sine_advection):
        with pytest.raises(ValueError, match="scalar field"):
            forward_a(FourierField.zeros(4, n_components=2), 2, sine_advection)

    def test_unresolved_profile(self, sine_advection):
        u = FourierField.from_modes({8: 1.0, -8: 1.0}, 8)
        with pytest.raises(ResolutionError, match="not resolved"):
            forward_a(u, 8, sine_advection)


class TestInverseMap:
    def test_round_trip(self, smooth_u, sine_advection):
        w = W_map(smooth_u, 8, sine_advection)
        back = U_map(w, 8, sine_advection)
        assert sobolev_norm(back.coeffs - smooth_u.coeffs, 1) < 1e-8

    def test_inverse_matches_forward_factor(self, smooth_u, sine_advection):
        forward = forward_a(smooth_u, 8, sine_advection)
        inverse = inverse_a(W_map(smooth_u, 8, sine_advection, forward), 8, sine_advection)
        assert inverse.residual <= 1e-9
        np.testing.assert_allclose(inverse.a.coeffs, forward.a.coeffs, atol=1e-8)

    def test_K_beyond_truncation(self, smooth_u, sine_advection):
        with pytest.raises(TruncationError, match="exceeds N_max"):
            inverse_a(smooth_u, 64, sine_advection)

    def test_w1inf_bounds_positive(self, smooth_u, sine_advection):
        assert w1inf_bounds(forward_a(smooth_u, 8, sine_advection)) >= 2.0 - 1e-12

    def test_w1inf_of_cos(self, cos_field):
        assert w1inf(cos_field) == pytest.approx(2.0, abs=1e-2)


class TestTimeDerivative:
    """∂ₜa agrees with a difference quotient along the flow"""

    def test_against_flow(self, smooth_u, sine_advection):
        h = 2e-4
        traj = integrate(smooth_u, 0.0, 2 * h, sine_advection, dt=2e-5, stride=10)
        a0, a1, a2 = (forward_a(traj.field(i), 8, sine_advection).a.coeffs for i in range(3))
        fd = (-3.0 * a0 + 4.0 * a1 - a2) / (2.0 * h)
        exact = a_time_derivative(W_map(smooth_u, 8, sine_advection), 8, sine_advection).coeffs
        assert sobolev_norm(exact - fd, 0) <= 1e-4 * max(1.0, sobolev_norm(fd, 0))


class TestUpsilon:
    def test_antiderivative_vanishes_at_minus_pi(self):
        h = _mean_zero_source(6).coeffs[0]
        assert abs(value_at_minus_pi(periodic_antiderivative(h))) < 1e-14

    def test_zero_weight_gives_antiderivative(self, cos_field):
        xi = upsilon(FourierField.zeros(8), cos_field)
        np.testing.assert_allclose(xi.coeffs, FourierField.from_function(np.sin, 8).coeffs, atol=1e-12)

    def test_solves_the_equation(self, phi_psi):
        phi, _ = phi_psi
        h = _mean_zero_source(24)
        xi = upsilon(phi, h)
        product = pointwise_apply(phi, xi, fn=lambda a, b: a * b).coeffs.copy()
        product[0, 24] = 0.0
        residual = derivative(xi).coeffs - product - h.coeffs
        assert sobolev_norm(residual, 0) < 1e-9
        assert abs(value_at_minus_pi(xi.coeffs[0])) < 1e-10

    def test_mean_precondition(self, phi_psi):
        phi, _ = phi_psi
        with pytest.raises(PreconditionError, match="needs"):
            upsilon(phi, FourierField.from_modes({0: 1.0}, 24))

    def test_upsilon_K_at_full_resolution_matches_collocation(self, phi_psi):
        phi, psi = phi_psi
        h = _mean_zero_source(24)
        xi, factor = upsilon_K(phi, psi, h, K=24)
        assert factor == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(xi.coeffs, collocation_solve_aK(phi, psi, h).coeffs, atol=1e-9)

    def test_upsilon_K_fixed_point(self, phi_psi):
        phi, psi = phi_psi
        h = _mean_zero_source(24)
        result = upsilon_K(phi, psi, h, K=4, return_details=True)
        assert result.contraction_factor < 1.0
        assert result.iterations >= 1


class TestContraction:
    def test_factor_decreases_with_K(self, phi_psi):
        phi, psi = phi_psi
        probe = contraction_probe(phi, psi, [2, 4, 8], workers=1)
        assert probe['factor'][-1] < probe['factor'][0]

    def test_find_K0_unreachable(self, phi_psi):
        phi, psi = phi_psi
        with pytest.raises(KTooSmallError, match="no K"):
            find_K0(phi, psi, target=1e-30)

    @pytest.mark.slow
    def test_rough_profile_slope(self):
        phi = rough_profile(256, exponent=0.55)
        psi = FourierField.from_modes({0: 1.0, 1: 0.25, -1: 0.25}, 256)
        probe = contraction_probe(phi, psi, [8, 16, 32, 64], workers=2)
        assert -0.75 < probe['slope'] < -0.35

    def test_rough_profile_modes(self):
        phi = rough_profile(8, exponent=0.5, amplitude=2.0)
        assert phi.mode(0) == 1.0
        assert phi.mode(4) == pytest.approx(1.0)
        assert phi.mode(-4) == pytest.approx(1.0)


class TestProbes:
    def test_lipschitz_probe(self, rng, sine_advection):
        u1 = random_smooth_field(rng, 32, 1.0)
        u2 = random_smooth_field(rng, 32, 1.0)
        value = a_lipschitz_probe([(u1, u2), (u1, u1)], 8, sine_advection)
        assert 0.0 < value < np.inf

    def test_identical_pairs(self, smooth_u, sine_advection):
        assert a_lipschitz_probe([(smooth_u, smooth_u)], 8, sine_advection) == 0.0

    def test_random_field_radius(self, rng):
        u = random_smooth_field(rng, 16, 2.0)
        assert u.is_real()
        assert sobolev_norm(u, 1) <= 2.0 + 1e-12
