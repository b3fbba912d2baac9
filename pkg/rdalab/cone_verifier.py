"""
Strong cone property along trajectories of the transformed equation

    ½ d/dt V(ξ) + α(w)V(ξ) ≤ −μ‖ξ‖²_{H²},   V(ξ) = ‖Q_Nξ‖²_Φ − ‖P_Nξ‖²_Φ,   ‖z‖²_Φ = (Az, z)

P_N keeps the wavenumbers |n| ≤ N (the first 2N+1 eigenvectors of A).
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from alarms import PreconditionError
from campaign import run_parallel
from diffeo import random_smooth_field
from rda_dynamics import EvolutionSystem, integrate_variational
from spectral_core import (
    TWO_PI,
    A_symbol,
    EigenTable,
    FourierField,
    project_coeffs,
    sobolev_norm,
    wavenumbers,
)

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-6
K_CONDITION = 1.0 / 64.0


def _signs(N_max: int, N: int) -> np.ndarray:
    """+1 on Q_N modes, −1 on P_N modes"""
    return np.where(np.abs(wavenumbers(N_max)) > N, 1.0, -1.0)


def V_form(xi: FourierField, N: int) -> float:
    """‖Q_Nξ‖²_Φ − ‖P_Nξ‖²_Φ"""
    coeffs = xi.coeffs
    N_max = xi.N_max
    weights = _signs(N_max, N) * A_symbol(N_max)
    return float(TWO_PI * np.sum(weights * np.abs(coeffs) ** 2))


def dV_dt(xi: np.ndarray, xi_t: np.ndarray, N: int) -> float:
    """d/dt V along ξ' = xi_t: 2·Re((Q_N − P_N)Aξ', ξ)"""
    N_max = (xi.shape[-1] - 1) // 2
    weights = _signs(N_max, N) * A_symbol(N_max)
    return float(2.0 * TWO_PI * np.sum(weights * np.real(xi_t * np.conj(xi))))


def alpha_bar(N: int) -> float:
    return 0.5 * (EigenTable.lambda_plus(N) + EigenTable.lambda_minus(N))


def alpha_of_w(w: FourierField, N: int, R: float) -> float:
    """(λ_{2N+1} + λ_{2N})/2, lowered by λ_{2N}/4 when ‖P_N w‖_{H²} > 2R"""
    if _outer_regime(w.coeffs, N, R):
        return alpha_bar(N) - 0.25 * EigenTable.lambda_minus(N)
    return alpha_bar(N)


def _outer_regime(w: np.ndarray, N: int, R: float) -> bool:
    return sobolev_norm(project_coeffs(w, N), 2) > 2.0 * R


def default_mu(N: int) -> float:
    lam_minus, lam_plus = EigenTable.lambda_minus(N), EigenTable.lambda_plus(N)
    return (lam_plus - lam_minus) / (16.0 * lam_plus)


@dataclass
class ConeReport:
    times: np.ndarray
    V_values: np.ndarray
    alpha_values: np.ndarray
    residuals: np.ndarray               # (½V' + αV + μ‖ξ‖²_{H²}) / ‖ξ‖²_{H²}
    fd_errors: np.ndarray               # |exact V' − centred difference| / ‖ξ‖²_{H²}
    integrated_residuals: np.ndarray    # per sample interval, normalized by Δ·‖ξ‖²_{H²}
    regimes: List[str]
    mu: float
    N: int
    tol: float = RESIDUAL_TOL
    diverged_at: Optional[float] = None

    @property
    def blowup(self) -> bool:
        return self.diverged_at is not None

    @property
    def violations(self) -> int:
        return int(np.count_nonzero(self.residuals > self.tol))

    @property
    def integrated_violations(self) -> int:
        return int(np.count_nonzero(self.integrated_residuals > self.tol))

    @property
    def passed(self) -> bool:
        return not self.blowup and self.violations == 0 and self.integrated_violations == 0

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals)) if len(self.residuals) else float('nan')

    @property
    def max_integrated_residual(self) -> float:
        return float(np.max(self.integrated_residuals)) if len(self.integrated_residuals) else float('nan')

    def summary(self) -> dict:
        return {
            'passed': self.passed,
            'blowup': self.blowup,
            'diverged_at': self.diverged_at,
            'violations': self.violations,
            'integrated_violations': self.integrated_violations,
            'max_integrated_residual': self.max_integrated_residual,
            'max_residual': self.max_residual,
            'min_margin': -self.max_residual,
            'max_fd_error': float(np.max(self.fd_errors)) if len(self.fd_errors) else float('nan'),
            'outer_regime_fraction': (self.regimes.count('outer') / len(self.regimes)) if self.regimes else 0.0,
            'mu': self.mu,
            'N': self.N,
        }

    def rows(self) -> List[tuple]:
        """(t, V, alpha, residual, regime)"""
        return [(float(t), float(v), float(a), float(r), reg)
                for t, v, a, r, reg in zip(self.times, self.V_values, self.alpha_values, self.residuals, self.regimes)]


def cone_run(w0: FourierField, xi0: FourierField, t_end: float, sys: EvolutionSystem, N: int,
             mu: Optional[float] = None, R: Optional[float] = None, dt: float = 1e-3, stride: int = 10,
             tol: float = RESIDUAL_TOL, R_kappa: Optional[float] = None, kappa: float = 0.25) -> ConeReport:
    """
    Co-integrate (w, ξ) and evaluate the cone inequality at every recorded sample.

    V' is evaluated exactly from ξ' = −Aξ + 𝓕'(w)ξ; the centred difference of the sampled V is
    reported as the time-discretization error estimate. When R_kappa is given, w0 must satisfy
    ‖Q_N w0‖_{H^{2−κ}} ≤ R_kappa. Blow-up of the variational flow is flagged, not raised.
    """
    mu = default_mu(N) if mu is None else mu
    R = getattr(sys, 'R', np.inf) if R is None else R
    if R_kappa is not None:
        tail = sobolev_norm(w0.coeffs - project_coeffs(w0.coeffs, N), 2.0 - kappa)
        if tail > R_kappa:
            raise PreconditionError(f"initial state outside the invariant set: tail {tail:.4g} > R_kappa {R_kappa:.4g}",
                                    tail=tail, R_kappa=R_kappa)

    states, xis = integrate_variational(w0, xi0, 0.0, t_end, sys, dt=dt, stride=stride, stop_on_divergence=True)
    if states.diverged_at is not None:
        logger.warning(f"⚠️  variational flow blew up at t={states.diverged_at:.4g}")

    N_max = w0.N_max
    symbol = np.broadcast_to(np.asarray(sys.linear_symbol(N_max), dtype=float), (1, 2 * N_max + 1))
    times = states.times
    V_values, alphas, residuals, h2, exact_dv, regimes = [], [], [], [], [], []
    for t, w, xi in zip(times, states.states, xis.states):
        xi_t = symbol * xi + sys.nonlinear_derivative(w, xi, t)
        V = V_form(FourierField(xi), N)
        outer = _outer_regime(w, N, R)
        alpha = alpha_bar(N) - (0.25 * EigenTable.lambda_minus(N) if outer else 0.0)
        norm2 = max(sobolev_norm(xi, 2) ** 2, 1e-300)
        dv = dV_dt(xi, xi_t, N)
        residuals.append((0.5 * dv + alpha * V + mu * norm2) / norm2)
        V_values.append(V)
        alphas.append(alpha)
        h2.append(norm2)
        exact_dv.append(dv)
        regimes.append('outer' if outer else 'inner')

    V_values = np.array(V_values)
    h2 = np.array(h2)
    fd_errors = np.zeros(len(times))
    if len(times) >= 3:
        centred = (V_values[2:] - V_values[:-2]) / (times[2:] - times[:-2])
        fd_errors[1:-1] = np.abs(np.array(exact_dv[1:-1]) - centred) / h2[1:-1]

    integrated = []
    for k in range(len(times) - 1):
        delta = times[k + 1] - times[k]
        decay = np.exp(-2.0 * alphas[k] * delta)
        # e^{−2α(t₂−s)} ≥ e^{−2αΔ} and ‖ξ(s)‖² ≥ the smaller endpoint on a dissipative step
        bound = decay * V_values[k] - 2.0 * mu * delta * decay * min(h2[k], h2[k + 1])
        integrated.append((V_values[k + 1] - bound) / (delta * max(h2[k], h2[k + 1])))

    report = ConeReport(times, V_values, np.array(alphas), np.array(residuals), fd_errors,
                        np.array(integrated), regimes, mu, N, tol, states.diverged_at)
    if not report.passed:
        logger.warning(f"⚠️  cone inequality flagged: {report.violations} pointwise and "
                       f"{report.integrated_violations} integrated violations, max residual {report.max_residual:.3e}")
    return report


def random_cone_samples(rng: np.random.Generator, N_max: int, count: int, w_radius: float = 0.5,
                        xi_modes: Optional[int] = None) -> List[Tuple[FourierField, FourierField]]:
    """Smooth (w0, ξ0) pairs; ξ0 spreads over both sides of the cut"""
    xi_modes = xi_modes or N_max // 2
    samples = []
    for _ in range(count):
        w0 = random_smooth_field(rng, N_max, w_radius)
        xi0 = random_smooth_field(rng, N_max, 1.0, modes=xi_modes, decay=0.5)
        samples.append((w0, xi0))
    return samples


def cone_campaign(sys: EvolutionSystem, N: int, samples: Sequence[Tuple[FourierField, FourierField]],
                  t_end: float, dt: float = 1e-3, stride: int = 10, mu: Optional[float] = None,
                  tol: float = RESIDUAL_TOL, workers: Optional[int] = None) -> dict:
    """Run cone_run on every sample in parallel and aggregate"""
    def run(sample):
        w0, xi0 = sample
        return cone_run(w0, xi0, t_end, sys, N, mu=mu, dt=dt, stride=stride, tol=tol)

    reports = run_parallel(run, samples, workers=workers, label="cone campaign")
    checked = sum(len(r.residuals) for r in reports)
    violating = sum(r.violations for r in reports)
    integrated = sum(r.integrated_violations for r in reports)
    summary = {
        'samples': len(reports),
        'passed': sum(r.passed for r in reports),
        'blowups': sum(r.blowup for r in reports),
        'checked_times': checked,
        'violation_fraction': violating / checked if checked else 0.0,
        'integrated_violations': integrated,
        'max_residual': max((r.max_residual for r in reports if len(r.residuals)), default=float('nan')),
        'N': N,
        'mu': reports[0].mu if reports else mu,
    }
    status = "✅" if summary['passed'] == summary['samples'] else "⚠️ "
    logger.info(f"{status} cone campaign N={N}: {summary['passed']}/{summary['samples']} passed, "
                f"violation fraction {summary['violation_fraction']:.3g}")
    return {'summary': summary, 'reports': reports}


# ---- gap bookkeeping ----------------------------------------------------------------

@dataclass
class GapAudit:
    N: int
    K: int
    constants: Dict[str, float]
    brackets: Dict[str, float] = field(default_factory=dict)
    k_condition_value: float = 0.0

    @property
    def k_condition(self) -> bool:
        return self.k_condition_value <= K_CONDITION

    @property
    def passed(self) -> bool:
        return all(value >= 0.0 for value in self.brackets.values())

    @property
    def failing(self) -> List[str]:
        return [name for name, value in self.brackets.items() if value < 0.0]

    def to_dict(self) -> dict:
        return {
            'N': self.N, 'K': self.K, 'constants': dict(self.constants), 'brackets': dict(self.brackets),
            'C2_over_K': self.k_condition_value, 'k_condition': self.k_condition,
            'passed': self.passed, 'failing': self.failing,
            'gap_ratio': gap_ratio(self.N),
        }


def gap_ratio(N: int) -> float:
    """(λ_{2N+1} − λ_{2N})²/λ_{2N+1} = (2N+1)²/((N+1)²+1)"""
    lam_minus, lam_plus = EigenTable.lambda_minus(N), EigenTable.lambda_plus(N)
    return (lam_plus - lam_minus) ** 2 / lam_plus


def gap_audit(N: int, K: int, constants: Dict[str, float]) -> GapAudit:
    """
    Coefficients that must be non-negative for the cone estimate to close.

    inner regime (‖P_N w‖_{H²} ≤ 2R):
      H1        (λ₊ − λ₋)/8 − C_K
      H5/4      (λ₊^{3/4} − λ₋^{3/4})/8 − C̃
      H2        (λ₊ − λ₋)/(16λ₊) − 2C²K⁻¹/(λ₊ − λ₋)
    outer regime:
      H1_outer  λ₋/4 − C̄₁²·8λ₊/(λ₊ − λ₋)
      H2_outer  (λ₊ − λ₋)/(32λ₊) − 2C²K⁻¹/(λ₊ − λ₋)
    """
    if N < 1 or K < 1:
        raise ValueError(f"N and K must be positive, got N={N}, K={K}")
    missing = {'C_K', 'C', 'C_tilde', 'C_bar1'} - set(constants)
    if missing:
        raise ValueError(f"missing constants: {sorted(missing)}")
    lam_minus, lam_plus = EigenTable.lambda_minus(N), EigenTable.lambda_plus(N)
    gap = lam_plus - lam_minus
    c2k = constants['C'] ** 2 / K
    brackets = {
        'H1': gap / 8.0 - constants['C_K'],
        'H5/4': (lam_plus ** 0.75 - lam_minus ** 0.75) / 8.0 - constants['C_tilde'],
        'H2': gap / (16.0 * lam_plus) - 2.0 * c2k / gap,
        'H1_outer': lam_minus / 4.0 - constants['C_bar1'] ** 2 * 8.0 * lam_plus / gap,
        'H2_outer': gap / (32.0 * lam_plus) - 2.0 * c2k / gap,
    }
    return GapAudit(N, K, dict(constants), brackets, c2k)


def smallest_passing_N(K: int, constants: Dict[str, float], N_limit: int = 5000) -> Optional[int]:
    """Smallest N ≤ N_limit whose audit passes, or None"""
    for N in range(1, N_limit + 1):
        if gap_audit(N, K, constants).passed:
            return N
    return None


def negative_control(N: int, K_small: int, constants: Dict[str, float], K_reference: int) -> dict:
    """Audit at a deliberately small K next to the reference; reports which brackets flip sign"""
    reference = gap_audit(N, K_reference, constants)
    control = gap_audit(N, K_small, constants)
    flipped = [name for name in reference.brackets
               if reference.brackets[name] >= 0.0 > control.brackets[name]]
    return {'reference': reference.to_dict(), 'control': control.to_dict(), 'flipped': flipped}
