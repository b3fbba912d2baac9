"""Tests for the transformed equation, the conjugacy check and the Q_N tail report"""

import numpy as np
import pytest

from diffeo import random_smooth_field
from rda_dynamics import RDASystem, integrate
from spectral_core import FourierField, sobolev_norm, wavenumbers
from transformed_system import (
    K_sweep_F1,
    TransformedSystem,
    conjugacy_check,
    measure_constants,
    qn_tail_check,
    rough_state,
    transformed_rhs,
    wave_packet_directions,
)


def cos_of(amplitude: float, N_max: int = 8) -> FourierField:
    return FourierField.from_modes({1: amplitude / 2, -1: amplitude / 2}, N_max)


class TestConstruction:
    """Fields and the evolution-system protocol"""

    def test_vector_base_rejected(self):
        pair = RDASystem(name="pair", m=2, f=lambda u, t, x: None, g=lambda u, t, x: None)
        with pytest.raises(ValueError, match="scalar"):
            TransformedSystem(pair, 4, 8, R=1.0, Rbar=1.0)

    def test_name_mentions_base_and_cuts(self, sine_advection):
        sys = TransformedSystem(sine_advection, 4, 8, R=16.0, Rbar=4.0)
        assert sys.name == "transformed[sine-advection, K=4, N=8]"

    def test_linear_symbol_is_the_base_one(self, sine_advection):
        sys = TransformedSystem(sine_advection, 4, 8, R=16.0, Rbar=4.0)
        np.testing.assert_array_equal(sys.linear_symbol(12), sine_advection.linear_symbol(12))


class TestSpatialAveraging:
    """T(w) = φ(‖Lw‖²)Lw"""

    def test_inactive_inside_R(self, linear_heat):
        sys = TransformedSystem(linear_heat, 4, 8, R=8.0, Rbar=4.0)
        assert not np.any(sys.T_op(cos_of(1.0)).coeffs)

    def test_saturates_outside_2R(self, linear_heat):
        sys = TransformedSystem(linear_heat, 4, 8, R=0.1, Rbar=4.0)
        w = cos_of(1.0)
        # L cos x = −2 cos x
        np.testing.assert_allclose(sys.T_op(w).coeffs, -0.5 * (-2.0) * w.coeffs, atol=1e-14)

    def test_only_modes_up_to_N(self, linear_heat):
        sys = TransformedSystem(linear_heat, 4, 2, R=0.1, Rbar=4.0)
        w = FourierField.from_modes({1: 1.0, -1: 1.0, 5: 1.0, -5: 1.0}, 8)
        T = sys.T_op(w)
        assert T.mode(5) == 0
        assert T.mode(1) != 0

    def test_derivative_matches_finite_difference(self, linear_heat):
        # ‖Lw‖² = 4π·0.04 lies inside the ramp (R², 4R²) for R = 0.5
        sys = TransformedSystem(linear_heat, 4, 4, R=0.5, Rbar=4.0)
        w = cos_of(0.2)
        xi = FourierField.from_modes({1: 0.3, -1: 0.3, 2: 0.2j, -2: -0.2j}, 8)
        h = 1e-6
        fd = (sys.T_coeffs((w + h * xi).coeffs) - sys.T_coeffs((w - h * xi).coeffs)) / (2 * h)
        np.testing.assert_allclose(sys.T_derivative(w, xi).coeffs, fd, atol=1e-7)


class TestNonlinearParts:
    """𝓕₁, 𝓕₂ and Θ"""

    def test_zero_outside_the_ball(self, sine_advection):
        sys = TransformedSystem(sine_advection, 4, 8, R=16.0, Rbar=2.0)
        w = cos_of(5.0)
        assert sobolev_norm(w, 1) ** 2 > 4.0
        assert not np.any(sys.F1(w).coeffs)
        assert not np.any(sys.F2(w).coeffs)
        assert sys.Theta(w) == 0.0

    def test_heat_has_only_the_averaging_term(self, linear_heat):
        sys = TransformedSystem(linear_heat, 4, 8, R=16.0, Rbar=4.0)
        w = cos_of(0.5, N_max=12)
        np.testing.assert_allclose(sys.nonlinear(w.coeffs, 0.0), 0.0, atol=1e-12)
        rhs = transformed_rhs(w, sys)
        np.testing.assert_allclose(rhs.coeffs, linear_heat.linear_symbol(12) * w.coeffs, atol=1e-12)

    def test_outputs_are_real(self, sine_advection, rng):
        sys = TransformedSystem(sine_advection, 4, 8, R=16.0, Rbar=4.0)
        w = random_smooth_field(rng, 16, 0.8, modes=5)
        assert sys.F1(w).is_real(1e-10)
        assert sys.F2(w).is_real(1e-10)
        assert np.isfinite(sys.Theta(w))

    def test_uncut_equals_cut_inside_the_ball(self, sine_advection, rng):
        sys = TransformedSystem(sine_advection, 4, 8, R=16.0, Rbar=4.0)
        w = random_smooth_field(rng, 16, 0.5, modes=4)
        assert sys.theta_of(w.coeffs) == 1.0
        np.testing.assert_allclose(sys.F1(w, cut=False).coeffs, sys.F1(w).coeffs, atol=1e-13)

    def test_zero_state(self, sine_advection):
        sys = TransformedSystem(sine_advection, 16, 8, R=16.0, Rbar=4.0)
        w = FourierField.zeros(16)
        assert not np.any(sys.F1(w).coeffs)


class TestConjugacy:
    """w(t) = W(u(t)) while the cut-offs are inactive"""

    @pytest.mark.slow
    def test_short_run_agrees(self, sine_advection, rng):
        sys = TransformedSystem(sine_advection, 4, 8, R=16.0, Rbar=4.0)
        u0 = random_smooth_field(rng, 16, 0.5, modes=4)
        report = conjugacy_check(u0, 0.05, sys, dt=1e-3, stride=10)
        assert len(report.times) == len(report.residuals)
        assert report.residuals[0] < 1e-9
        assert report.max_residual < 1e-5


class TestQNTail:
    """Tail reports on a pure heat flow"""

    @pytest.fixture
    def heat_traj(self, linear_heat, rng):
        u0 = random_smooth_field(rng, 16, 1.0, modes=12)
        return integrate(u0, 0.0, 1.0, linear_heat, dt=1e-3, stride=10)

    def test_kappa_range(self, heat_traj):
        with pytest.raises(ValueError, match="kappa"):
            qn_tail_check(heat_traj, 1.0, 4)
        with pytest.raises(ValueError, match="kappa"):
            qn_tail_check(heat_traj, 0.0, 4)

    def test_tail_decays_monotonically(self, heat_traj):
        report = qn_tail_check(heat_traj, 0.25, 4)
        assert report.tail_norms[0] > 0
        assert report.feasible
        assert report.R_kappa == pytest.approx(0.0, abs=1e-10)
        assert report.contracted_below(1e-6 * report.tail_norms[0])
        assert report.monotone_until(0.0)

    def test_given_alpha_is_kept(self, heat_traj):
        report = qn_tail_check(heat_traj, 0.5, 4, alpha=2.0)
        assert report.alpha == 2.0
        assert report.N == 4


class TestProbeData:
    """Directions, rough states and measured constants"""

    def test_wave_packets(self):
        packets = wave_packet_directions(32, 8)
        assert len(packets) == 3
        for p in packets:
            assert sobolev_norm(p, 1) == pytest.approx(1.0)
            assert p.is_real(1e-12)
        centred = np.abs(packets[0].coeffs[0, 32:])
        assert int(np.argmax(centred)) == 12

    def test_rough_state(self):
        w = rough_state(64)
        assert w.mode(0) == 0
        assert w.is_real(1e-14)
        n = wavenumbers(64)[65:]
        # |ŵ(n)| ~ n^{−1.55}
        slope = np.polyfit(np.log(n), np.log(np.abs(w.coeffs[0, 65:])), 1)[0]
        assert slope == pytest.approx(-1.55, abs=1e-10)

    def test_measure_constants(self, sine_advection, rng):
        sys = TransformedSystem(sine_advection, 4, 8, R=16.0, Rbar=4.0)
        samples = [random_smooth_field(rng, 16, 0.5, modes=4)]
        constants = measure_constants(sys, samples, rng, directions_per_sample=1)
        assert set(constants) == {'C_K', 'C', 'C_tilde', 'C_bar1'}
        assert all(np.isfinite(v) and v >= 0 for v in constants.values())

    def test_K_sweep_shape(self, sine_advection):
        w = rough_state(32, amplitude=0.05)
        sweep = K_sweep_F1(lambda K: w, lambda K: TransformedSystem(sine_advection, K, 8, R=16.0, Rbar=4.0),
                           [4, 8], lambda K: wave_packet_directions(32, K, count=1), workers=1)
        assert sweep['K'] == [4, 8]
        assert all(np.isfinite(v) and v > 0 for v in sweep['lipschitz'])
        assert np.isfinite(sweep['slope'])
