"""
Transformed equation for w = a(u)⁻¹u

    ∂ₜw = −Aw − Θ(w)∂ₓw + T(w) + 𝓕₁(w) + 𝓕₂(w)

with F₁ = (f(P_K(aw)) − f(aw))∂ₓw, F₂ = a⁻¹[∂ₓ²a − ∂ₜa − f(aw)∂ₓa]w − a⁻¹g(aw),
Θ = θ(‖w‖²_{H¹})⟨f(P_K(aw))⟩, 𝓕ᵢ = θ(‖w‖²_{H¹})Fᵢ and the spatial-averaging term
T(w) = φ(‖Lw‖²)Lw, L = (∂ₓ² − 1)P_N.
"""

import logging
import threading
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from campaign import run_pair, run_parallel
from cutoffs import phi_cutoff, theta_cutoff
from diffeo import DiffeoResult, W_map, a_time_derivative, inverse_a, random_smooth_field
from rda_dynamics import RDASystem, Trajectory, central_difference, integrate
from spectral_core import (
    DEFAULT_PADDING,
    EigenTable,
    FourierField,
    from_grid,
    grid,
    padded_size,
    project_coeffs,
    sobolev_norm,
    to_grid,
    wavenumbers,
)

logger = logging.getLogger(__name__)

SOLVER_TOL = 1e-12
FD_STEP = 1e-5


def _real(coeffs: np.ndarray) -> np.ndarray:
    return 0.5 * (coeffs + np.conj(coeffs[..., ::-1]))


class TransformedSystem:
    """Scalar transformed system; implements the evolution-system protocol of rda_dynamics"""

    derivative_methods = {"T": "exact", "F1": "finite-difference", "F2": "finite-difference",
                          "Theta": "finite-difference"}

    def __init__(self, base: RDASystem, K: int, N: int, R: float, Rbar: float, C_theta: float = 1.0,
                 padding: float = DEFAULT_PADDING, solver_tol: float = SOLVER_TOL):
        if base.m != 1:
            raise ValueError("the transformed system is defined for scalar equations")
        self.base = base
        self.K = K
        self.N = N
        self.R = R
        self.Rbar = Rbar
        self.cutoff_theta = theta_cutoff(C_theta * Rbar, 2.0 * C_theta * Rbar)
        self.cutoff_phi = phi_cutoff(R)
        self.padding = padding
        self.solver_tol = solver_tol
        self.m = 1
        self.name = f"transformed[{base.name}, K={K}, N={N}]"
        self._warm: Optional[np.ndarray] = None
        self._lock = threading.Lock()

    # ---- factor solve with warm start ---------------------------------------

    def solve(self, w: FourierField) -> DiffeoResult:
        with self._lock:
            warm = None if self._warm is None or self._warm.shape != w.coeffs[0].shape else self._warm.copy()
        result = inverse_a(w, self.K, self.base, tol=self.solver_tol, y0=warm, padding=self.padding)
        with self._lock:
            self._warm = result.y.coeffs[0].copy()
        return result

    def theta_of(self, w: np.ndarray) -> float:
        return float(self.cutoff_theta(sobolev_norm(w, 1) ** 2))

    # ---- nonlinear parts -------------------------------------------------------

    def _nonlinear_parts(self, w: np.ndarray, t: float = 0.0) -> Tuple[np.ndarray, np.ndarray, float]:
        """(𝓕₁, 𝓕₂, Θ) with a single inverse-factor solve"""
        w = np.atleast_2d(w)
        N_max = (w.shape[-1] - 1) // 2
        theta = self.theta_of(w)
        if theta == 0.0:
            zero = np.zeros_like(w, dtype=complex)
            return zero, zero.copy(), 0.0

        field = FourierField(w)
        res = self.solve(field)
        f = self.base.scalar_f
        g = self.base.scalar_g
        M = padded_size(N_max, self.padding)
        x = grid(M)
        wc = w[0]
        w_vals = to_grid(wc, M).real
        wx_vals = to_grid(wc * (1j * wavenumbers(N_max)), M).real
        a_vals = to_grid(res.a.coeffs[0], M).real
        a_inv_vals = to_grid(res.a_inv.coeffs[0], M).real
        u_vals = a_vals * w_vals
        pk = project_coeffs(from_grid(u_vals, N_max), self.K)
        fP = f(to_grid(pk, M).real)
        fU = f(u_vals)

        F1 = (fP - fU) * wx_vals
        theta_raw = float(from_grid(fP, N_max)[N_max].real)

        dt_a = a_time_derivative(field, self.K, self.base, result=res, t=t, padding=self.padding)
        dx_a = to_grid(res.dx_a.coeffs[0], M).real
        dxx_a = to_grid(res.dxx_a.coeffs[0], M).real
        dt_a_vals = to_grid(dt_a.coeffs[0], M).real
        F2 = a_inv_vals * (dxx_a - dt_a_vals - fU * dx_a) * w_vals - a_inv_vals * g(u_vals, x)

        F1c = _real(from_grid(F1, N_max))[None, :]
        F2c = _real(from_grid(F2, N_max))[None, :]
        return theta * F1c, theta * F2c, theta * theta_raw

    def F1(self, w: FourierField, cut: bool = True) -> FourierField:
        F1c, _, _ = self._nonlinear_parts(w.coeffs)
        if not cut:
            theta = self.theta_of(w.coeffs)
            F1c = F1c / theta if theta > 0 else F1c
        return FourierField(F1c)

    def F2(self, w: FourierField, cut: bool = True) -> FourierField:
        _, F2c, _ = self._nonlinear_parts(w.coeffs)
        if not cut:
            theta = self.theta_of(w.coeffs)
            F2c = F2c / theta if theta > 0 else F2c
        return FourierField(F2c)

    def Theta(self, w: FourierField) -> float:
        return self._nonlinear_parts(w.coeffs)[2]

    # ---- spatial averaging -------------------------------------------------------

    def _L(self, coeffs: np.ndarray) -> np.ndarray:
        N_max = (coeffs.shape[-1] - 1) // 2
        n = wavenumbers(N_max)
        return project_coeffs(-(n * n + 1.0) * coeffs, self.N)

    def T_coeffs(self, w: np.ndarray) -> np.ndarray:
        Lw = self._L(np.atleast_2d(w))
        s = sobolev_norm(Lw, 0) ** 2
        return self.cutoff_phi(s) * Lw

    def T_op(self, w: FourierField) -> FourierField:
        return FourierField(self.T_coeffs(w.coeffs))

    def T_derivative(self, w: FourierField, xi: FourierField) -> FourierField:
        """T'(w)ξ = φ'(s)·2(Lw, Lξ)·Lw + φ(s)·Lξ with s = ‖Lw‖²"""
        Lw = self._L(w.coeffs)
        Lxi = self._L(xi.coeffs)
        s = sobolev_norm(Lw, 0) ** 2
        pairing = float(np.real(2.0 * np.pi * np.sum(Lw * np.conj(Lxi))))
        return FourierField(self.cutoff_phi.derivative(s) * 2.0 * pairing * Lw + self.cutoff_phi(s) * Lxi)

    # ---- evolution-system protocol ----------------------------------------------

    def linear_symbol(self, N_max: int) -> np.ndarray:
        return self.base.linear_symbol(N_max)

    def _without_T(self, coeffs: np.ndarray, t: float) -> np.ndarray:
        F1c, F2c, theta = self._nonlinear_parts(coeffs, t)
        N_max = (coeffs.shape[-1] - 1) // 2
        advection = theta * coeffs * (1j * wavenumbers(N_max))
        return -advection + F1c + F2c

    def nonlinear(self, coeffs: np.ndarray, t: float) -> np.ndarray:
        coeffs = np.atleast_2d(coeffs)
        return self._without_T(coeffs, t) + self.T_coeffs(coeffs)

    def nonlinear_derivative(self, coeffs: np.ndarray, dcoeffs: np.ndarray, t: float) -> np.ndarray:
        coeffs = np.atleast_2d(coeffs)
        dcoeffs = np.atleast_2d(dcoeffs)
        exact = self.T_derivative(FourierField(coeffs), FourierField(dcoeffs)).coeffs
        return exact + central_difference(self._without_T, coeffs, dcoeffs, t, rel_step=FD_STEP)


def transformed_rhs(w: FourierField, sys: TransformedSystem, t: float = 0.0) -> FourierField:
    """−Aw − Θ(w)∂ₓw + T(w) + 𝓕₁(w) + 𝓕₂(w)"""
    coeffs = w.coeffs
    return FourierField(sys.linear_symbol(w.N_max) * coeffs + sys.nonlinear(coeffs, t))


# ---- conjugacy -------------------------------------------------------------------

@dataclass
class ConjugacyReport:
    times: np.ndarray
    residuals: np.ndarray
    dt: float

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals))


def conjugacy_check(u0: FourierField, t_end: float, sys: TransformedSystem, dt: float = 1e-3,
                    stride: int = 50) -> ConjugacyReport:
    """‖W(u(t)) − w(t)‖_{H¹} with u under the original flow and w under the transformed one"""
    w0 = W_map(u0, sys.K, sys.base)
    original, transformed = run_pair(
        lambda: integrate(u0, 0.0, t_end, sys.base, dt=dt, stride=stride),
        lambda: integrate(w0, 0.0, t_end, sys, dt=dt, stride=stride),
    )
    residuals = np.array([
        sobolev_norm(W_map(original.field(i), sys.K, sys.base).coeffs - transformed.states[i], 1)
        for i in range(len(original))
    ])
    report = ConjugacyReport(original.times, residuals, dt)
    logger.info(f"✅ conjugacy residual max {report.max_residual:.3e} up to t={t_end}")
    return report


def conjugacy_convergence(u0: FourierField, t_end: float, sys: TransformedSystem,
                          dts: Sequence[float] = (4e-3, 2e-3, 1e-3)) -> dict:
    """Max residual per dt and the observed order between successive halvings"""
    residuals = [conjugacy_check(u0, t_end, sys, dt=dt, stride=max(1, int(round(t_end / dt / 10)))).max_residual
                 for dt in dts]
    orders = [float(np.log2(residuals[i] / residuals[i + 1])) if residuals[i + 1] > 0 else float('inf')
              for i in range(len(residuals) - 1)]
    return {'dt': list(dts), 'max_residual': residuals, 'observed_order': orders}


# ---- Q_N tail ----------------------------------------------------------------------

@dataclass
class QNTailReport:
    times: np.ndarray
    tail_norms: np.ndarray
    kappa: float
    N: int
    alpha: float
    R_kappa: float

    @property
    def feasible(self) -> bool:
        return bool(np.isfinite(self.R_kappa))

    def contracted_below(self, level: float) -> bool:
        return bool(self.tail_norms[-1] <= level)

    def monotone_until(self, level: float, slack: float = 1e-12) -> bool:
        """Non-increasing until the tail first drops below level"""
        q = self.tail_norms
        below = np.nonzero(q <= level)[0]
        stop = below[0] if len(below) else len(q) - 1
        return bool(np.all(np.diff(q[:stop + 1]) <= slack * max(1.0, q[0])))


def qn_tail_norms(traj: Trajectory, kappa: float, N: int) -> np.ndarray:
    norms = []
    for state in traj.states:
        tail = state - project_coeffs(state, N)
        norms.append(sobolev_norm(tail, 2.0 - kappa))
    return np.array(norms)


def qn_tail_check(traj: Trajectory, kappa: float, N: int, alpha: Optional[float] = None) -> QNTailReport:
    """
    Smallest R_κ with ‖Q_N w(t)‖_{H^{2−κ}} ≤ (‖Q_N w(0)‖ − R_κ)₊e^{−αt} + R_κ on the samples.

    α defaults to the decay rate observed on the first quarter of the run, clipped to
    [1e−3, λ_{2N+1}]; falls back to 1 when the tail does not decay there.
    """
    if not 0.0 < kappa < 1.0:
        raise ValueError(f"kappa must lie in (0, 1), got {kappa}")
    q = qn_tail_norms(traj, kappa, N)
    t = traj.times - traj.times[0]
    q0 = q[0]

    if alpha is None:
        early = (t <= 0.25 * t[-1]) & (q > 0)
        alpha = 1.0
        if np.count_nonzero(early) >= 3:
            slope = float(np.polyfit(t[early], np.log(q[early]), 1)[0])
            if slope < 0:
                alpha = float(np.clip(-slope, 1e-3, EigenTable.lambda_plus(N)))

    later = t > 0
    decay = np.exp(-alpha * t[later])
    candidate = float(np.max((q[later] - q0 * decay) / (1.0 - decay))) if np.any(later) else 0.0
    R_kappa = max(candidate, 0.0)
    if R_kappa > q0:
        R_kappa = float(np.max(q))
    return QNTailReport(traj.times, q, kappa, N, alpha, R_kappa)


# ---- probes -------------------------------------------------------------------------

def wave_packet_directions(N_max: int, K: int, count: int = 3) -> List[FourierField]:
    """Real packets with frequencies in [K, 2K], centred at 0 and at ±π/(2K), unit H¹ norm"""
    n = wavenumbers(N_max).astype(float)
    bump = np.exp(-(((np.abs(n) - 1.5 * K) / (0.35 * K)) ** 2))
    bump[np.abs(n) > N_max] = 0.0
    directions = []
    for x0 in [0.0, np.pi / (2 * K), -np.pi / (2 * K)][:count]:
        coeffs = bump * np.exp(-1j * n * x0)
        field = FourierField(coeffs)
        directions.append(field * (1.0 / sobolev_norm(field, 1)))
    return directions


def rough_state(N_max: int, amplitude: float = 0.3, exponent: float = 0.55) -> FourierField:
    """w with ∂ₓw ~ |x|^{exponent−1} near 0"""
    n = wavenumbers(N_max).astype(float)
    safe = np.where(n == 0, 1.0, n)
    coeffs = np.where(n == 0, 0.0, amplitude * np.abs(safe) ** (-exponent) / (1j * safe))
    return FourierField(coeffs)


def F1_lipschitz_probe(w: FourierField, directions: Sequence[FourierField], sys: TransformedSystem,
                       h: float = 1e-4) -> float:
    """max ‖𝓕₁(w + hδ) − 𝓕₁(w − hδ)‖_{L²} / (2h‖δ‖_{H¹})"""
    ratios = []
    for delta in directions:
        plus = sys.F1(w + h * delta).coeffs
        minus = sys.F1(w - h * delta).coeffs
        ratios.append(sobolev_norm(plus - minus, 0) / (2.0 * h * sobolev_norm(delta, 1)))
    return float(max(ratios))


def Theta_lipschitz_probe(w: FourierField, directions: Sequence[FourierField], sys: TransformedSystem,
                          h: float = 1e-4) -> float:
    ratios = []
    for delta in directions:
        diff = sys.Theta(w + h * delta) - sys.Theta(w - h * delta)
        ratios.append(abs(diff) / (2.0 * h * sobolev_norm(delta, 1)))
    return float(max(ratios))


def F2_lipschitz_probe(w: FourierField, directions: Sequence[FourierField], sys: TransformedSystem,
                       h: float = 1e-4) -> float:
    ratios = []
    for delta in directions:
        diff = sys.F2(w + h * delta).coeffs - sys.F2(w - h * delta).coeffs
        ratios.append(sobolev_norm(diff, 1) / (2.0 * h * sobolev_norm(delta, 1)))
    return float(max(ratios))


def K_sweep_F1(w_builder, sys_builder, K_values: Sequence[int], directions_builder,
               workers: Optional[int] = None) -> dict:
    """Lipschitz constant of 𝓕₁ per K and the log–log slope"""
    def probe(K: int) -> float:
        sys = sys_builder(int(K))
        return F1_lipschitz_probe(w_builder(int(K)), directions_builder(int(K)), sys)

    values = run_parallel(probe, K_values, workers=workers, label="F1 Lipschitz sweep")
    slope = float(np.polyfit(np.log(K_values), np.log(values), 1)[0]) if len(K_values) > 1 else float('nan')
    return {'K': [int(k) for k in K_values], 'lipschitz': [float(v) for v in values], 'slope': slope}


def qn_bound_probe(sys: TransformedSystem, samples: Sequence[FourierField], N: int) -> float:
    """max ‖Q_N(RHS + Aw)‖_{L²} over the samples"""
    values = []
    for w in samples:
        nonlinear = sys.nonlinear(w.coeffs, 0.0)
        values.append(sobolev_norm(nonlinear - project_coeffs(nonlinear, N), 0))
    return float(max(values))


def measure_constants(sys: TransformedSystem, samples: Sequence[FourierField],
                      rng: np.random.Generator, directions_per_sample: int = 2, h: float = 1e-4) -> Dict[str, float]:
    """
    Empirical surrogates for the constants of the gap conditions:
      C_K     Lipschitz constant of 𝓕₂ in H¹
      C       √K × Lipschitz constant of 𝓕₁ from H¹ to L²
      C_tilde Lipschitz constant of Θ times max ‖w‖_{H²} over the samples
      C_bar1  max |Θ| over the samples
    """

    lip_F1, lip_F2, lip_Theta, h2, theta_abs = [], [], [], [], []
    for w in samples:
        directions = [random_smooth_field(rng, w.N_max, 1.0, modes=min(12, w.N_max)) for _ in range(directions_per_sample)]
        directions = [d * (1.0 / sobolev_norm(d, 1)) for d in directions]
        lip_F1.append(F1_lipschitz_probe(w, directions, sys, h))
        lip_F2.append(F2_lipschitz_probe(w, directions, sys, h))
        lip_Theta.append(Theta_lipschitz_probe(w, directions, sys, h))
        h2.append(sobolev_norm(w, 2))
        theta_abs.append(abs(sys.Theta(w)))

    constants = {
        'C_K': float(max(lip_F2)),
        'C': float(np.sqrt(sys.K) * max(lip_F1)),
        'C_tilde': float(max(lip_Theta) * max(h2)),
        'C_bar1': float(max(theta_abs)),
    }
    logger.info(f"✅ measured constants at K={sys.K}: {constants}")
    return constants
