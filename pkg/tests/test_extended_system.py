"""Tests for the autonomous embedding and the reflection symmetrization"""

import math

import numpy as np
import pytest

from alarms import PreconditionError
from diffeo import random_smooth_field
from extended_system import (
    U,
    V,
    ExtendedSystem,
    SymmetrizedSystem,
    antisymmetric_part,
    circle_residuals,
    dirichlet_trace,
    extended_nonlinear_run,
    grid_amplitude,
    orbit_state,
    per_period_drift,
    reconstruct,
    symmetric_part,
    symmetrize,
    symmetrize_mixed_bc,
)
from rda_dynamics import integrate
from spectral_core import FourierField, reflect


def small_pair(amplitude: float = 0.05, N_max: int = 6) -> FourierField:
    return FourierField.from_modes({(0, 0): amplitude, (1, 1): 0.5 * amplitude, (-2, 0): 0.25j * amplitude},
                                   N_max, n_components=2)


class TestOrbit:
    """Initial data on the invariant circles"""

    def test_orbit_state(self, short_counterexample):
        state = orbit_state(short_counterexample, 6)
        assert state.n_components == 4
        assert state.mode(0, component=0) == 1.0
        assert state.mode(1, component=1) == 1.0
        residuals = circle_residuals(state.coeffs)
        assert residuals['y'] < 1e-14
        assert residuals['z'] < 1e-13
        assert residuals['z_radius'] == pytest.approx(1.0)

    def test_perturbation_needs_two_components(self, short_counterexample):
        with pytest.raises(PreconditionError, match="two components"):
            orbit_state(short_counterexample, 6, FourierField.zeros(6))

    def test_grid_amplitude(self, short_counterexample):
        state = orbit_state(short_counterexample, 6, FourierField.from_modes({0: 0.2}, 6, n_components=2))
        assert grid_amplitude(state.coeffs) == pytest.approx(0.2)


class TestExtendedSystem:
    """Spectral fast path against the grid evaluation"""

    @pytest.mark.parametrize("t_fraction", [0.0, 0.25, 0.5, 1.5])
    def test_fast_path_matches_grid(self, short_counterexample, t_fraction):
        state = orbit_state(short_counterexample, 6, small_pair(), t=t_fraction * short_counterexample.T)
        fast = ExtendedSystem(short_counterexample).nonlinear(state.coeffs, 0.0)
        slow = ExtendedSystem(short_counterexample, fast_path=False).nonlinear(state.coeffs, 0.0)
        np.testing.assert_allclose(fast, slow, atol=1e-12)

    def test_amplitude_precondition(self, short_counterexample):
        with pytest.raises(PreconditionError, match="φ = 1"):
            extended_nonlinear_run(short_counterexample, FourierField.from_modes({0: 0.6}, 6, n_components=2))

    def test_zero_perturbation_gives_identical_runs(self, short_counterexample):
        report = extended_nonlinear_run(short_counterexample, FourierField.zeros(6, n_components=2), n_periods=1)
        assert report.identical
        assert report.fit is None
        assert max(report.y_drift) < 1e-6
        assert report.summary()['identical'] is True

    def test_perturbed_run(self, short_counterexample):
        report = extended_nonlinear_run(short_counterexample, small_pair(), n_periods=2)
        assert not report.identical
        assert np.all(np.isfinite(report.log_difference))
        assert report.log_difference[-1] < report.log_difference[0]
        assert report.fit is not None
        assert {'gamma', 'r2', 'max_y_drift', 'n_periods'} <= set(report.summary())

    def test_per_period_drift(self):
        times = np.linspace(0.0, 2.0, 21)
        residuals = 1e-3 * times
        drifts = per_period_drift(times, residuals, 1.0)
        assert drifts == pytest.approx([1e-3, 1e-3])


class TestSymmetrization:
    """S = U + RU, D = U − RU"""

    def test_parts(self, rng):
        field = random_smooth_field(rng, 8, 1.0)
        np.testing.assert_allclose(reflect(symmetric_part(field)).coeffs, symmetric_part(field).coeffs)
        np.testing.assert_allclose(reflect(antisymmetric_part(field)).coeffs, -antisymmetric_part(field).coeffs)
        assert dirichlet_trace(antisymmetric_part(field).coeffs) < 1e-14
        np.testing.assert_allclose(reconstruct(symmetrize(field)).coeffs, field.coeffs, atol=1e-15)

    def test_dirichlet_trace_of_cosine(self, cos_field):
        # cos(0) = 1, cos(π) = −1
        assert dirichlet_trace(cos_field.coeffs) == pytest.approx(1.0)

    def test_any_system(self, sine_advection, rng):
        u0 = random_smooth_field(rng, 12, 1.0)
        sym = SymmetrizedSystem(sine_advection)
        assert sym.m == 2
        direct = integrate(u0, 0.0, 0.2, sine_advection, dt=1e-3, stride=50)
        mirrored = integrate(symmetrize(u0), 0.0, 0.2, sym, dt=1e-3, stride=50)
        for a, b in zip(direct.states, mirrored.states):
            np.testing.assert_allclose(reconstruct(FourierField(b)).coeffs, a, atol=1e-10)
            assert dirichlet_trace(b[1:]) < 1e-10

    def test_mixed_bc_run(self, short_counterexample):
        report = symmetrize_mixed_bc(short_counterexample, small_pair(), t_end=0.2, dt=1e-3, stride=50, n_periods=0)
        assert report.passed
        assert report.summary()['components'] == 8
        assert report.fit is None
        assert report.rows() == []

    def test_local_terms_for_unrelated_halves(self, sine_advection, rng):
        # S and D need not come from one U: the mirrored half is evaluated on its own
        s = random_smooth_field(rng, 10, 1.0)
        d = random_smooth_field(rng, 10, 1.0)
        sym = SymmetrizedSystem(sine_advection)
        out = sym.nonlinear(s.stack(d).coeffs, 0.0)

        direct = FourierField(sine_advection.nonlinear(((s + d) * 0.5).coeffs, 0.0))
        mirrored = reflect(FourierField(sine_advection.nonlinear(reflect((s - d) * 0.5).coeffs, 0.0)))
        np.testing.assert_allclose(out[:1], (direct + mirrored).coeffs, atol=1e-12)
        np.testing.assert_allclose(out[1:], (direct - mirrored).coeffs, atol=1e-12)

    def test_extended_layout(self, short_counterexample):
        sym = SymmetrizedSystem(ExtendedSystem(short_counterexample))
        assert sym.m == 8
        assert sym.scaled_rows == (V, U, V + 4, U + 4)
        state = symmetrize(orbit_state(short_counterexample, 6, small_pair())).coeffs
        residuals = circle_residuals(sym.orbit_coeffs(state))
        assert residuals['y'] < 1e-14
        assert grid_amplitude(state, rows=sym.scaled_rows) > grid_amplitude(state)

    @pytest.mark.slow
    def test_symmetrized_pair_decays_like_the_direct_pair(self, short_counterexample):
        direct = extended_nonlinear_run(short_counterexample, small_pair(), n_periods=2)
        report = symmetrize_mixed_bc(short_counterexample, small_pair(), t_end=0.2, n_periods=2)
        assert report.passed
        assert not report.identical
        assert report.log_difference[-1] < report.log_difference[0]
        assert report.fit is not None
        assert report.fit.gamma > 0
        # ‖(δS, δD)‖ = 2‖δU‖ in H¹ since the norm is reflection invariant
        assert report.fit.gamma == pytest.approx(direct.fit.gamma, rel=1e-4)
        assert report.fit.log_C == pytest.approx(direct.fit.log_C + math.log(2.0), abs=1e-4)
        assert {'gamma', 'r2', 'max_y_drift', 'final_log_difference'} <= set(report.summary())
        assert len(report.rows()) == len(report.pair_times)
