"""
Autonomous embedding of the periodic counterexample and its mixed-boundary symmetrization

The time dependence y(t) = sin(πt/T) and the factors e^{±ix} are carried by two extra complex
equations whose solutions y = e^{iπt/T} and z = e^{ix} sit on invariant circles:

    ∂ₜy = ∂ₓ²y + (iπ/T)y + y(1 − |y|²)
    ∂ₜz = ∂ₓ²z + z(2 − |z|²)
    ∂ₜ𝐮 = ∂ₓ²𝐮 + φ(|𝐮|²)·[counterexample terms with Im y, z] + (1 − φ(|𝐮|²))(𝐮 − 𝐮|𝐮|²)

State layout: components (y, z, v, u), each complex.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from alarms import ModelConsistencyError, PreconditionError, ReflectionConsistencyError
from campaign import run_pair
from cutoffs import SmoothCutoff, embedding_phi
from floquet_lab import CounterexampleConfig, DecayFit, fit_cubic_decay, shift_down, shift_up
from rda_dynamics import ETDRK4Integrator, Trajectory, central_difference, integrate as integrate_pde
from spectral_core import (
    DEFAULT_PADDING,
    FourierField,
    from_grid,
    grid,
    padded_size,
    reflect,
    sobolev_norm,
    to_grid,
    wavenumbers,
)

logger = logging.getLogger(__name__)

CIRCLE_TOL = 1e-6
RECONSTRUCTION_TOL = 1e-8
ORBIT_TOL = 1e-12
Y, Z, V, U = 0, 1, 2, 3


class ExtendedSystem:
    """Four complex RDA equations (eight real ones); linear part ∂ₓ² on every component"""

    real = False
    scaled_rows = (V, U)

    def __init__(self, config: CounterexampleConfig, phi: Optional[SmoothCutoff] = None, padding: float = 2.0,
                 fast_path: bool = True):
        self.config = config
        self.phi = phi or embedding_phi()
        self.padding = padding
        self.fast_path = fast_path
        self.m = 4
        self.name = f"extended[T={config.T}]"

    def linear_symbol(self, N_max: int) -> np.ndarray:
        n = wavenumbers(N_max).astype(float)
        return -(n * n)

    def nonlinear(self, coeffs: np.ndarray, t: float) -> np.ndarray:
        if self.fast_path:
            exact = self._spectral_terms(coeffs)
            if exact is not None:
                return exact
        return self._grid_terms(coeffs, t)

    def orbit_coeffs(self, coeffs: np.ndarray) -> np.ndarray:
        return coeffs

    def _spectral_terms(self, coeffs: np.ndarray) -> Optional[np.ndarray]:
        """Exact terms while y is constant in x, z = z₁e^{ix} and (v, u) stays where φ = 1"""
        if coeffs.ndim != 2:
            return None
        cfg = self.config
        N_max = (coeffs.shape[-1] - 1) // 2
        c = N_max
        y0, z1 = coeffs[Y, c], coeffs[Z, c + 1]
        if (np.max(np.abs(np.delete(coeffs[Y], c)), initial=0.0) > ORBIT_TOL
                or np.max(np.abs(np.delete(coeffs[Z], c + 1)), initial=0.0) > ORBIT_TOL):
            return None
        if grid_amplitude(coeffs, self.padding) ** 2 > self.phi.lo:
            return None

        n = wavenumbers(N_max)
        s = float(y0.imag)
        th1_plus, th1_minus, th2 = cfg.theta1(s), cfg.theta1(-s), cfg.theta2(s)
        eps = cfg.epsilon
        v, u = coeffs[V], coeffs[U]
        out = np.zeros_like(coeffs)
        out[Y, c] = (1j * math.pi / cfg.T) * y0 + y0 * (1.0 - abs(y0) ** 2)
        out[Z, c + 1] = z1 * (2.0 - abs(z1) ** 2)
        out[V] = -(2 * n + 1) * th2 * v - eps * th1_plus * np.conj(z1) * shift_down(u) - eps * th1_minus * u
        out[U] = eps * th1_plus * z1 * shift_up(v) + eps * th1_minus * v
        return out

    def _grid_terms(self, coeffs: np.ndarray, t: float) -> np.ndarray:
        N_max = (coeffs.shape[-1] - 1) // 2
        M = padded_size(N_max, self.padding)
        n = wavenumbers(N_max)
        values = to_grid(coeffs, M)
        dvalues = to_grid(coeffs * (1j * n), M)
        return from_grid(self.grid_terms(values, dvalues, t, grid(M)), N_max)

    def grid_terms(self, values: np.ndarray, dvalues: np.ndarray, t: float, x: np.ndarray) -> np.ndarray:
        """Pointwise terms from grid values and their x-derivatives; x enters only through z"""
        cfg = self.config
        y, z, v, u = (values[..., k, :] for k in (Y, Z, V, U))
        vx = dvalues[..., V, :]

        dy = (1j * math.pi / cfg.T) * y + y * (1.0 - np.abs(y) ** 2)
        dz = z * (2.0 - np.abs(z) ** 2)

        s = y.imag
        th1_plus, th1_minus, th2 = cfg.theta1(s), cfg.theta1(-s), cfg.theta2(s)
        eps = cfg.epsilon
        # e^{−ix} = Re z − i·Im z on the orbit
        lin_v = (2j * vx - v) * th2 - eps * np.conj(z) * u * th1_plus - eps * u * th1_minus
        lin_u = eps * z * v * th1_plus + eps * v * th1_minus

        w = np.abs(v) ** 2 + np.abs(u) ** 2
        p = self.phi(w)
        dv = p * lin_v + (1.0 - p) * (v - v * w)
        du = p * lin_u + (1.0 - p) * (u - u * w)
        return np.stack([dy, dz, dv, du], axis=-2)

    def nonlinear_derivative(self, coeffs: np.ndarray, dcoeffs: np.ndarray, t: float) -> np.ndarray:
        return central_difference(self.nonlinear, coeffs, dcoeffs, t)


def orbit_state(config: CounterexampleConfig, N_max: int, perturbation: Optional[FourierField] = None,
                t: float = 0.0) -> FourierField:
    """(y, z, v, u) = (e^{iπt/T}, e^{ix}, perturbation)"""
    data = np.zeros((4, 2 * N_max + 1), dtype=complex)
    data[Y, N_max] = np.exp(1j * math.pi * t / config.T)
    data[Z, N_max + 1] = 1.0
    if perturbation is not None:
        if perturbation.n_components != 2:
            raise PreconditionError("perturbation must have the two components (v, u)",
                                    n_components=perturbation.n_components)
        data[V:] = perturbation.resized(N_max).coeffs
    return FourierField(data)


def grid_amplitude(coeffs: np.ndarray, padding: float = 2.0, rows: Sequence[int] = (V, U)) -> float:
    """sup_x |𝐮(x)| over the given rows, the (v, u) block by default"""
    N_max = (coeffs.shape[-1] - 1) // 2
    values = to_grid(coeffs[list(rows)], padded_size(N_max, padding))
    return float(np.sqrt(np.max(np.sum(np.abs(values) ** 2, axis=0))))


def circle_residuals(coeffs: np.ndarray, padding: float = 2.0) -> dict:
    """
    |y| − 1 on the grid, and the residual of the z-equation ∂ₓ²z + z(2 − |z|²), which vanishes
    on its periodic orbit whatever the orbit radius turns out to be.
    """
    N_max = (coeffs.shape[-1] - 1) // 2
    M = padded_size(N_max, padding)
    n = wavenumbers(N_max)
    y = to_grid(coeffs[Y], M)
    z = to_grid(coeffs[Z], M)
    zxx = to_grid(coeffs[Z] * -(n * n), M)
    return {
        'y': float(np.max(np.abs(np.abs(y) - 1.0))),
        'z': float(np.max(np.abs(zxx + z * (2.0 - np.abs(z) ** 2)))),
        'z_radius': float(np.mean(np.abs(z))),
    }


@dataclass
class ScaledRun:
    times: np.ndarray
    states: np.ndarray                  # (samples, m, 2N+1), scaled rows divided by exp(log_scales)
    log_scales: np.ndarray
    y_residuals: np.ndarray
    z_residuals: np.ndarray


def run_scaled(state0: FourierField, t_end: float, system, dt: float, stride: int = 20,
               renormalize: bool = True) -> ScaledRun:
    """
    ETDRK4 run that keeps the system's scaled rows at a fixed amplitude while they lie where φ = 1.

    Inside that region those rows evolve linearly given (y, z), so rescaling them commutes with the
    flow; the accumulated log factor is tracked in log_scales. Works for ExtendedSystem and for its
    symmetrized form.
    """
    coeffs = np.array(state0.coeffs, dtype=complex)
    N_max = state0.N_max
    rows = list(system.scaled_rows)
    n_steps = max(1, int(math.ceil(t_end / dt - 1e-9)))
    integrator = ETDRK4Integrator(system, t_end / n_steps, N_max)
    amp0 = grid_amplitude(coeffs, system.padding, rows)
    target = min(amp0, 0.1)
    log_scale = 0.0 if amp0 > 0 else -np.inf

    times, states, scales, y_res, z_res = [], [], [], [], []

    def record(t: float):
        res = circle_residuals(system.orbit_coeffs(coeffs), system.padding)
        times.append(t)
        states.append(coeffs.copy())
        scales.append(log_scale)
        y_res.append(res['y'])
        z_res.append(res['z'])

    record(0.0)
    for k in range(n_steps):
        coeffs = integrator.step(coeffs, k * integrator.dt)
        if renormalize and amp0 > 0:
            amp = grid_amplitude(coeffs, system.padding, rows)
            if 0 < amp < 1e-3 * target:
                factor = target / amp
                coeffs[rows] *= factor
                log_scale -= math.log(factor)
        if (k + 1) % stride == 0 or k + 1 == n_steps:
            record((k + 1) * integrator.dt)
    return ScaledRun(np.array(times), np.array(states), np.array(scales), np.array(y_res), np.array(z_res))


def per_period_drift(times: np.ndarray, residuals: np.ndarray, period: float) -> List[float]:
    """Growth of the residual inside each period"""
    drifts = []
    n_periods = int(math.floor(times[-1] / period + 1e-9))
    for k in range(max(n_periods, 1)):
        mask = (times >= k * period - 1e-12) & (times <= (k + 1) * period + 1e-12)
        if np.count_nonzero(mask) == 0:
            continue
        window = residuals[mask]
        drifts.append(float(np.max(window) - window[0]))
    return drifts


def check_circles(run: ScaledRun, period: float, tol: float = CIRCLE_TOL) -> Tuple[List[float], List[float]]:
    """Per-period drift of the y and z residuals; ModelConsistencyError above tol"""
    y_drift = per_period_drift(run.times, run.y_residuals, period)
    z_drift = per_period_drift(run.times, run.z_residuals, period)
    worst = max(max(y_drift), max(z_drift))
    if worst > tol:
        raise ModelConsistencyError(f"y or z left its invariant circle: drift {worst:.3e} per period (tol {tol:g})",
                                    y_drift=max(y_drift), z_drift=max(z_drift))
    return y_drift, z_drift


@dataclass
class ExtendedRunReport:
    times: np.ndarray
    log_difference: np.ndarray          # log ‖𝐔₁ − 𝐔₂‖_Φ
    y_drift: List[float]
    z_drift: List[float]
    fit: Optional[DecayFit]
    identical: bool
    config: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {
            'identical': self.identical,
            'max_y_drift': max(self.y_drift) if self.y_drift else 0.0,
            'max_z_drift': max(self.z_drift) if self.z_drift else 0.0,
            'final_log_difference': float(self.log_difference[-1]),
            **self.config,
        }
        if self.fit is not None:
            out.update({'gamma': self.fit.gamma, 'beta': self.fit.beta, 'log_C': self.fit.log_C,
                        'r2': self.fit.r2, 'r2_cubic_only': self.fit.r2_cubic_only})
        return out

    def rows(self) -> List[tuple]:
        return [(float(t), float(v)) for t, v in zip(self.times, self.log_difference)]


def _log_difference(first: ScaledRun, second: ScaledRun, rows: Sequence[int] = (V, U)) -> np.ndarray:
    """log‖𝐔₁ − 𝐔₂‖_{H¹} sample by sample, combining the two scale factors in log space"""
    scaled = np.zeros(first.states.shape[1], dtype=bool)
    scaled[list(rows)] = True
    out = []
    for a, la, b, lb in zip(first.states, first.log_scales, second.states, second.log_scales):
        fixed = sobolev_norm(a[~scaled] - b[~scaled], 1)
        peak = max(la, lb)
        if not np.isfinite(peak):
            scaled_log = -np.inf
        else:
            wa = a[scaled] * (math.exp(la - peak) if np.isfinite(la) else 0.0)
            wb = b[scaled] * (math.exp(lb - peak) if np.isfinite(lb) else 0.0)
            diff = sobolev_norm(wa - wb, 1)
            scaled_log = math.log(diff) + peak if diff > 0 else -np.inf
        fixed_log = math.log(fixed) if fixed > 0 else -np.inf
        out.append(float(np.logaddexp(2.0 * fixed_log, 2.0 * scaled_log) / 2.0))
    return np.array(out)


def _tail_fit(times: np.ndarray, log_diff: np.ndarray, period: float) -> Tuple[bool, Optional[DecayFit]]:
    """(identical, fit of log C − βt − γt³ over t ≥ one period)"""
    identical = not np.any(np.isfinite(log_diff))
    tail = (times >= period) & np.isfinite(log_diff)
    if identical or np.count_nonzero(tail) < 4:
        return identical, None
    return identical, fit_cubic_decay(times[tail], log_diff[tail])


def _check_amplitude(state: FourierField, system) -> None:
    amp = grid_amplitude(state.coeffs, system.padding)
    if amp > 0.5:
        raise PreconditionError(f"perturbation amplitude {amp:.3g} leaves the region where φ = 1 (needs ≤ 1/2)",
                                amplitude=amp)


def extended_nonlinear_run(config: CounterexampleConfig, perturbation: FourierField, n_periods: int = 4,
                           N_max: Optional[int] = None, dt: float = 1e-3, stride: int = 20,
                           tol: float = CIRCLE_TOL) -> ExtendedRunReport:
    """
    𝐔₁ with (v, u) ≡ 0 and 𝐔₂ with (v, u) = perturbation, both from y = 1, z = e^{ix}.

    Reports log‖𝐔₁ − 𝐔₂‖_Φ, its fit against log C − βt − γt³ after the first period, and the
    per-period drift of the invariant-circle residuals.
    """
    N_max = N_max or perturbation.N_max
    system = ExtendedSystem(config)
    U1 = orbit_state(config, N_max)
    U2 = orbit_state(config, N_max, perturbation)
    _check_amplitude(U2, system)

    t_end = 2.0 * config.T * n_periods
    logger.info(f"⏳ extended run: {n_periods} periods, T={config.T}, N_max={N_max}, dt={dt}")
    first, second = run_pair(lambda: run_scaled(U1, t_end, system, dt, stride),
                             lambda: run_scaled(U2, t_end, system, dt, stride))

    period = 2.0 * config.T
    y_drift, z_drift = check_circles(second, period, tol)
    log_diff = _log_difference(first, second, system.scaled_rows)
    identical, fit = _tail_fit(second.times, log_diff, period)
    if fit is not None:
        logger.info(f"✅ extended pair: gamma={fit.gamma:.4g}, R²={fit.r2:.5f}, "
                    f"final log-difference {log_diff[-1]:.4g}")
    return ExtendedRunReport(second.times, log_diff, y_drift, z_drift, fit, identical,
                             {'T': config.T, 'N_max': N_max, 'dt': dt, 'n_periods': n_periods})


# ---- mixed Dirichlet/Neumann symmetrization ---------------------------------------------

def symmetric_part(field: FourierField) -> FourierField:
    """U(x) + U(2π − x)"""
    return field + reflect(field)


def antisymmetric_part(field: FourierField) -> FourierField:
    """U(x) − U(2π − x)"""
    return field - reflect(field)


def dirichlet_trace(coeffs: np.ndarray) -> float:
    """max |D(0)|, |D(π)| over the components of a coefficient array"""
    N_max = (coeffs.shape[-1] - 1) // 2
    sign = np.where(wavenumbers(N_max) % 2 == 0, 1.0, -1.0)
    at_zero = np.abs(np.sum(coeffs, axis=-1))
    at_pi = np.abs(np.sum(coeffs * sign, axis=-1))
    return float(max(np.max(at_zero), np.max(at_pi)))


class SymmetrizedSystem:
    """
    (S, D) = (U + RU, U − RU) with R the reflection x ↦ −x, for any base system that exposes
    grid_terms(values, dvalues, t, x).

    The right-hand side is assembled pointwise from S and D. With U = (S + D)/2 and RU = (S − D)/2,
    the reflected copy solves the base equation with its advection and its x reversed:

        ∂ₜS = LS + N(U, ∂ₓU, x) + N(RU, −∂ₓRU, −x)
        ∂ₜD = LD + N(U, ∂ₓU, x) − N(RU, −∂ₓRU, −x)

    S carries Neumann data and D Dirichlet data at x = 0 and x = π.
    """

    def __init__(self, base):
        self.base = base
        self.m = 2 * base.m
        self.padding = getattr(base, 'padding', DEFAULT_PADDING)
        self.real = getattr(base, 'real', False)
        base_rows = tuple(getattr(base, 'scaled_rows', range(base.m)))
        self.scaled_rows = base_rows + tuple(row + base.m for row in base_rows)
        self.name = f"symmetrized[{getattr(base, 'name', 'system')}]"

    def linear_symbol(self, N_max: int) -> np.ndarray:
        symbol = np.asarray(self.base.linear_symbol(N_max), dtype=float)
        if symbol.ndim < 2:
            return symbol
        return np.concatenate([symbol, symbol], axis=0)

    def nonlinear(self, coeffs: np.ndarray, t: float) -> np.ndarray:
        m = self.base.m
        N_max = (coeffs.shape[-1] - 1) // 2
        M = padded_size(N_max, self.padding)
        n = wavenumbers(N_max)
        values = to_grid(coeffs, M)
        dvalues = to_grid(coeffs * (1j * n), M)
        if self.real:
            values, dvalues = values.real, dvalues.real
        s, d = values[..., :m, :], values[..., m:, :]
        sx, dx = dvalues[..., :m, :], dvalues[..., m:, :]
        x = grid(M)

        direct = self.base.grid_terms(0.5 * (s + d), 0.5 * (sx + dx), t, x)
        mirrored = self.base.grid_terms(0.5 * (s - d), -0.5 * (sx - dx), t, -x)
        out = from_grid(np.concatenate([direct + mirrored, direct - mirrored], axis=-2), N_max)
        if self.real:
            out = 0.5 * (out + np.conj(out[..., ::-1]))
        return out

    def nonlinear_derivative(self, coeffs: np.ndarray, dcoeffs: np.ndarray, t: float) -> np.ndarray:
        return central_difference(self.nonlinear, coeffs, dcoeffs, t)

    def orbit_coeffs(self, coeffs: np.ndarray) -> np.ndarray:
        """U = (S + D)/2"""
        m = self.base.m
        return 0.5 * (coeffs[..., :m, :] + coeffs[..., m:, :])


def symmetrize(state: FourierField) -> FourierField:
    return symmetric_part(state).stack(antisymmetric_part(state))


def reconstruct(sym_state: FourierField) -> FourierField:
    m = sym_state.n_components // 2
    return FourierField(0.5 * (sym_state.coeffs[:m] + sym_state.coeffs[m:]))


@dataclass
class SymmetrizationReport:
    times: np.ndarray
    reconstruction_errors: np.ndarray
    dirichlet_traces: np.ndarray
    direct: Trajectory
    symmetrized: Trajectory
    tol: float
    pair_times: Optional[np.ndarray] = None
    log_difference: Optional[np.ndarray] = None     # log ‖(S₁, D₁) − (S₂, D₂)‖_{H¹}
    fit: Optional[DecayFit] = None
    identical: bool = False
    y_drift: List[float] = field(default_factory=list)
    z_drift: List[float] = field(default_factory=list)

    @property
    def max_reconstruction_error(self) -> float:
        return float(np.max(self.reconstruction_errors))

    @property
    def max_dirichlet_trace(self) -> float:
        return float(np.max(self.dirichlet_traces))

    @property
    def passed(self) -> bool:
        return self.max_reconstruction_error <= self.tol and self.max_dirichlet_trace <= self.tol

    def summary(self) -> dict:
        out = {'components': self.symmetrized.states.shape[1], 'max_reconstruction_error': self.max_reconstruction_error,
               'max_dirichlet_trace': self.max_dirichlet_trace, 'passed': self.passed, 'tol': self.tol}
        if self.log_difference is not None:
            out.update({'pair_identical': self.identical,
                        'final_log_difference': float(self.log_difference[-1]),
                        'max_y_drift': max(self.y_drift, default=0.0),
                        'max_z_drift': max(self.z_drift, default=0.0)})
        if self.fit is not None:
            out.update({'gamma': self.fit.gamma, 'beta': self.fit.beta, 'log_C': self.fit.log_C,
                        'r2': self.fit.r2, 'r2_cubic_only': self.fit.r2_cubic_only})
        return out

    def rows(self) -> List[tuple]:
        if self.log_difference is None:
            return []
        return [(float(t), float(v)) for t, v in zip(self.pair_times, self.log_difference)]


def symmetrize_mixed_bc(config: CounterexampleConfig, perturbation: FourierField, t_end: Optional[float] = None,
                        N_max: Optional[int] = None, dt: float = 1e-3, stride: int = 20,
                        tol: float = RECONSTRUCTION_TOL, n_periods: int = 4,
                        circle_tol: float = CIRCLE_TOL) -> SymmetrizationReport:
    """
    Run the 16-equation symmetrized system next to the direct extended system and check that
    ½(S + D) reproduces it and that D keeps its Dirichlet trace at x = 0 and x = π.

    With n_periods > 0 the decaying pair is then run on the symmetrized system itself, from
    (S, D) of the unperturbed and perturbed orbit states, and log‖(S₁, D₁) − (S₂, D₂)‖ is fitted
    against log C − βt − γt³ after the first period.
    """
    N_max = N_max or perturbation.N_max
    t_end = 2.0 * config.T if t_end is None else t_end
    base = ExtendedSystem(config)
    u0 = orbit_state(config, N_max, perturbation)
    _check_amplitude(u0, base)
    sym = SymmetrizedSystem(base)

    direct, mirrored = run_pair(lambda: integrate_pde(u0, 0.0, t_end, base, dt=dt, stride=stride),
                                lambda: integrate_pde(symmetrize(u0), 0.0, t_end, sym, dt=dt, stride=stride))

    errors, traces = [], []
    for a, b in zip(direct.states, mirrored.states):
        rebuilt = reconstruct(FourierField(b))
        scale = max(1.0, sobolev_norm(a, 1))
        errors.append(sobolev_norm(rebuilt.coeffs - a, 1) / scale)
        traces.append(dirichlet_trace(b[base.m:]))
    report = SymmetrizationReport(direct.times, np.array(errors), np.array(traces), direct, mirrored, tol)
    if not report.passed:
        raise ReflectionConsistencyError(
            f"symmetrized run disagrees: reconstruction {report.max_reconstruction_error:.3e}, "
            f"Dirichlet trace {report.max_dirichlet_trace:.3e}", **report.summary())
    logger.info(f"✅ symmetrized system reproduces the direct run to {report.max_reconstruction_error:.2e}")

    if n_periods > 0:
        period = 2.0 * config.T
        S1 = symmetrize(orbit_state(config, N_max))
        S2 = symmetrize(u0)
        logger.info(f"⏳ symmetrized pair: {n_periods} periods, {sym.m} components, N_max={N_max}")
        first, second = run_pair(lambda: run_scaled(S1, period * n_periods, sym, dt, stride),
                                 lambda: run_scaled(S2, period * n_periods, sym, dt, stride))
        report.y_drift, report.z_drift = check_circles(second, period, circle_tol)
        report.pair_times = second.times
        report.log_difference = _log_difference(first, second, sym.scaled_rows)
        report.identical, report.fit = _tail_fit(second.times, report.log_difference, period)
        if report.fit is not None:
            logger.info(f"✅ symmetrized pair: gamma={report.fit.gamma:.4g}, R²={report.fit.r2:.5f}")
    return report
