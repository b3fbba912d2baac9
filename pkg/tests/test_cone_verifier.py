"""Tests for the cone functional, the co-integrated cone check and the gap audit"""

import numpy as np
import pytest

from alarms import PreconditionError
from cone_verifier import (
    K_CONDITION,
    ConeReport,
    V_form,
    alpha_bar,
    alpha_of_w,
    cone_campaign,
    cone_run,
    dV_dt,
    default_mu,
    gap_audit,
    gap_ratio,
    negative_control,
    random_cone_samples,
    smallest_passing_N,
)
from diffeo import random_smooth_field
from spectral_core import FourierField

ZERO_CONSTANTS = {'C_K': 0.0, 'C': 0.0, 'C_tilde': 0.0, 'C_bar1': 0.0}


class TestConeFunctional:
    """V(ξ) = ‖Q_Nξ‖²_Φ − ‖P_Nξ‖²_Φ"""

    def test_sign_follows_the_cut(self, cos_field):
        # ‖cos‖²_Φ = 2π·2·(1/2)²·2
        assert V_form(cos_field, 0) == pytest.approx(2 * np.pi)
        assert V_form(cos_field, 1) == pytest.approx(-2 * np.pi)

    def test_derivative_is_exact_for_the_quadratic_form(self, rng):
        xi = random_smooth_field(rng, 12, 1.0, modes=10)
        xi_t = random_smooth_field(rng, 12, 1.0, modes=10)
        h = 1e-4
        fd = (V_form(xi + h * xi_t, 4) - V_form(xi - h * xi_t, 4)) / (2 * h)
        assert dV_dt(xi.coeffs, xi_t.coeffs, 4) == pytest.approx(fd, rel=1e-9)

    def test_alpha_between_the_eigenvalues(self):
        assert alpha_bar(3) == pytest.approx((17 + 10) / 2)
        assert default_mu(3) == pytest.approx(7 / 272)

    def test_alpha_lowered_in_the_outer_regime(self, cos_field):
        assert alpha_of_w(cos_field, 3, R=100.0) == alpha_bar(3)
        assert alpha_of_w(cos_field, 3, R=1e-3) == pytest.approx(alpha_bar(3) - 0.25 * 10)


class TestConeRun:
    """Co-integration on the heat flow, where the cone estimate holds exactly"""

    def test_heat_flow_passes(self, linear_heat, rng):
        w0 = random_smooth_field(rng, 16, 0.5)
        xi0 = random_smooth_field(rng, 16, 1.0, modes=8, decay=0.5)
        report = cone_run(w0, xi0, 0.1, linear_heat, 3, dt=1e-3, stride=10)
        assert report.passed
        assert not report.blowup
        assert report.max_residual < 0
        assert set(report.regimes) == {'inner'}
        assert len(report.rows()) == len(report.times)
        summary = report.summary()
        assert summary['violations'] == 0
        assert summary['integrated_violations'] == 0
        assert report.max_integrated_residual < 0
        assert len(report.integrated_residuals) == len(report.times) - 1
        assert summary['mu'] == pytest.approx(default_mu(3))
        assert np.isfinite(summary['max_fd_error'])

    def test_precondition_on_the_tail(self, linear_heat, rng):
        w0 = random_smooth_field(rng, 16, 0.5, modes=6)
        xi0 = random_smooth_field(rng, 16, 1.0)
        with pytest.raises(PreconditionError, match="invariant set"):
            cone_run(w0, xi0, 0.1, linear_heat, 3, R_kappa=0.0)

    def test_campaign(self, linear_heat, rng):
        samples = random_cone_samples(rng, 16, 2)
        result = cone_campaign(linear_heat, 3, samples, 0.05, workers=1)
        summary = result['summary']
        assert summary['samples'] == 2
        assert summary['passed'] == 2
        assert summary['blowups'] == 0
        assert summary['violation_fraction'] == 0.0
        assert summary['integrated_violations'] == 0
        assert len(result['reports']) == 2

    @staticmethod
    def _report(residuals, integrated):
        n = len(residuals)
        return ConeReport(np.linspace(0.0, 0.1, n), np.zeros(n), np.full(n, alpha_bar(3)), np.array(residuals),
                          np.zeros(n), np.array(integrated), ['inner'] * n, default_mu(3), 3)

    def test_integrated_violation_fails_the_run(self):
        report = self._report([-1.0, -1.0], [5.0])
        assert report.violations == 0
        assert report.integrated_violations == 1
        assert not report.passed
        assert report.summary()['max_integrated_residual'] == 5.0

    def test_both_forms_below_tolerance_pass(self):
        report = self._report([-1.0, -1.0], [-0.5])
        assert report.passed
        assert not self._report([0.1, -1.0], [-0.5]).passed

    def test_random_samples(self, rng):
        samples = random_cone_samples(rng, 16, 3, w_radius=0.25)
        assert len(samples) == 3
        for w0, xi0 in samples:
            assert isinstance(w0, FourierField)
            assert w0.is_real() and xi0.is_real()


class TestGapAudit:
    """Bracket bookkeeping"""

    def test_gap_ratio(self):
        assert gap_ratio(2) == pytest.approx(25 / 10)

    def test_zero_constants_pass(self):
        audit = gap_audit(1, 8, ZERO_CONSTANTS)
        assert audit.passed
        assert audit.failing == []
        assert audit.brackets['H1'] == pytest.approx(3 / 8)
        assert audit.k_condition

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError, match="positive"):
            gap_audit(0, 8, ZERO_CONSTANTS)
        with pytest.raises(ValueError, match="missing constants"):
            gap_audit(2, 8, {'C_K': 1.0})

    def test_smallest_passing_N(self):
        # (2N+1)/8 ≥ 1 first holds at N = 4
        assert smallest_passing_N(8, {**ZERO_CONSTANTS, 'C_K': 1.0}) == 4
        assert smallest_passing_N(8, {**ZERO_CONSTANTS, 'C_K': 1e9}, N_limit=10) is None

    def test_k_condition(self):
        assert not gap_audit(4, 8, {**ZERO_CONSTANTS, 'C': 1.0}).k_condition
        assert gap_audit(4, 64, {**ZERO_CONSTANTS, 'C': 1.0}).k_condition_value == pytest.approx(K_CONDITION)

    def test_negative_control_flips_the_K_brackets(self):
        control = negative_control(4, 1, {**ZERO_CONSTANTS, 'C': 1.0}, K_reference=64)
        assert control['reference']['passed']
        assert not control['control']['passed']
        assert sorted(control['flipped']) == ['H2', 'H2_outer']

    def test_audit_dict(self):
        data = gap_audit(2, 8, ZERO_CONSTANTS).to_dict()
        assert data['passed'] is True
        assert data['gap_ratio'] == pytest.approx(2.5)
        assert set(data['brackets']) == {'H1', 'H5/4', 'H2', 'H1_outer', 'H2_outer'}
