"""
Time integration of periodic RDA systems

    ∂ₜu = ∂ₓ²u − u − f(u)∂ₓu − g(u)     (the −u term optional)

The diagonal linear part is handled exactly by fourth-order exponential time differencing
(ETDRK4); the nonlinear part is evaluated pseudo-spectrally on a padded grid. Any object with
`m`, `linear_symbol(N_max)`, `nonlinear(coeffs, t)` and `nonlinear_derivative(coeffs, dcoeffs, t)`
can be integrated, which is how the transformed and time-periodic systems reuse this module.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from alarms import DivergenceError
from campaign import run_parallel
from coefficient_cache import cached
from nonlinearities import get_nonlinearity
from spectral_core import (
    DEFAULT_PADDING,
    FourierField,
    from_grid,
    grid,
    padded_size,
    sobolev_norm,
    to_grid,
    wavenumbers,
)

logger = logging.getLogger(__name__)

DEFAULT_DT = 1e-3
N_ROOTS = 32
VIOLATION_TOL = 0.05


class EvolutionSystem(Protocol):
    m: int

    def linear_symbol(self, N_max: int) -> np.ndarray: ...

    def nonlinear(self, coeffs: np.ndarray, t: float) -> np.ndarray: ...

    def nonlinear_derivative(self, coeffs: np.ndarray, dcoeffs: np.ndarray, t: float) -> np.ndarray: ...


@dataclass
class RDASystem:
    """
    One RDA system with m components.

    f(u, t, x) returns (m, m, M) matrices and g(u, t, x) returns (m, M) vectors, where u holds
    the grid values (m, M). df/dg, when given, are exact directional derivatives
    df(u, du, t, x), dg(u, du, t, x); otherwise derivatives use central differences.
    """

    name: str
    m: int
    f: Callable
    g: Callable
    df: Optional[Callable] = None
    dg: Optional[Callable] = None
    include_linear_u: bool = True
    support_radius: Optional[float] = None
    padding: float = DEFAULT_PADDING
    real: bool = True
    # scalar forms used by the change of variables
    scalar_f: Optional[Callable] = None
    scalar_df: Optional[Callable] = None
    scalar_g: Optional[Callable] = None
    scalar_dg: Optional[Callable] = None

    @classmethod
    def scalar(cls, name: str, f: Callable, df: Callable, g: Callable, dg: Callable,
               include_linear_u: bool = True, support_radius: Optional[float] = None,
               padding: float = DEFAULT_PADDING) -> 'RDASystem':
        """Scalar system from f(u), f'(u), g(u, x), g'(u, x) acting on real arrays"""
        return cls(
            name=name,
            m=1,
            f=lambda u, t, x: f(u[0], x)[None, None, :],
            g=lambda u, t, x: g(u[0], x)[None, :],
            df=lambda u, du, t, x: (df(u[0], x) * du[0])[None, None, :],
            dg=lambda u, du, t, x: (dg(u[0], x) * du[0])[None, :],
            include_linear_u=include_linear_u,
            support_radius=support_radius,
            padding=padding,
            real=True,
            scalar_f=f,
            scalar_df=df,
            scalar_g=g,
            scalar_dg=dg,
        )

    @classmethod
    def from_catalog(cls, name: str, forcing: Optional[float] = None, padding: float = DEFAULT_PADDING) -> 'RDASystem':
        entry = get_nonlinearity(name, forcing)
        return cls.scalar(entry.name, entry.f, entry.df, entry.g, entry.dg,
                          include_linear_u=entry.include_linear_u,
                          support_radius=entry.support_radius, padding=padding)

    @property
    def derivative_method(self) -> str:
        return "exact" if self.df is not None and self.dg is not None else "finite-difference"

    def linear_symbol(self, N_max: int) -> np.ndarray:
        n = wavenumbers(N_max).astype(float)
        return -(n * n + (1.0 if self.include_linear_u else 0.0))

    def _grid_values(self, coeffs: np.ndarray):
        N_max = (coeffs.shape[-1] - 1) // 2
        M = padded_size(N_max, self.padding)
        n = wavenumbers(N_max)
        u = to_grid(coeffs, M)
        ux = to_grid(coeffs * (1j * n), M)
        if self.real:
            u, ux = u.real, ux.real
        return N_max, M, u, ux

    def _finish(self, values: np.ndarray, N_max: int) -> np.ndarray:
        out = from_grid(values, N_max)
        if self.real:
            out = 0.5 * (out + np.conj(out[..., ::-1]))
        return out

    def grid_terms(self, u: np.ndarray, ux: np.ndarray, t: float, x: np.ndarray) -> np.ndarray:
        """−f(u)∂ₓu − g(u) at grid points x"""
        return -(np.einsum('ijk,jk->ik', self.f(u, t, x), ux) + self.g(u, t, x))

    def nonlinear(self, coeffs: np.ndarray, t: float) -> np.ndarray:
        """−f(u)∂ₓu − g(u), truncated to the state's N_max"""
        N_max, M, u, ux = self._grid_values(coeffs)
        return self._finish(self.grid_terms(u, ux, t, grid(M)), N_max)

    def nonlinear_derivative(self, coeffs: np.ndarray, dcoeffs: np.ndarray, t: float) -> np.ndarray:
        if self.derivative_method != "exact":
            return central_difference(self.nonlinear, coeffs, dcoeffs, t)
        N_max, M, u, ux = self._grid_values(coeffs)
        _, _, du, dux = self._grid_values(dcoeffs)
        x = grid(M)
        F = self.f(u, t, x)
        dF = self.df(u, du, t, x)
        dG = self.dg(u, du, t, x)
        values = np.einsum('ijk,jk->ik', dF, ux) + np.einsum('ijk,jk->ik', F, dux) + dG
        return self._finish(-values, N_max)

    def support_check(self, rng: np.random.Generator, samples: int = 200) -> bool:
        """f and g vanish outside 2·R_sup (sampled); True when there is no radius to check"""
        if self.support_radius is None:
            return True
        radius = 2.0 * self.support_radius
        u = rng.uniform(radius, 3.0 * radius, size=(self.m, samples)) * rng.choice([-1.0, 1.0], size=(self.m, samples))
        x = rng.uniform(-np.pi, np.pi, size=samples)
        return bool(np.all(self.f(u, 0.0, x) == 0.0) and np.all(self.g(u, 0.0, x) == 0.0))


def central_difference(nonlinear: Callable, coeffs: np.ndarray, dcoeffs: np.ndarray, t: float,
                       rel_step: float = 1e-6) -> np.ndarray:
    """Directional derivative of a coefficient-space map by central differences"""
    size = float(np.max(np.abs(dcoeffs), initial=0.0))
    if size == 0.0:
        return np.zeros_like(dcoeffs, dtype=complex)
    h = rel_step * max(1.0, float(np.max(np.abs(coeffs), initial=0.0))) / size
    return (nonlinear(coeffs + h * dcoeffs, t) - nonlinear(coeffs - h * dcoeffs, t)) / (2.0 * h)


class JointSystem:
    """(state, ξ) integrated together: the second block follows the linearization"""

    def __init__(self, system: EvolutionSystem):
        self.system = system
        self.m = 2 * system.m

    def linear_symbol(self, N_max: int) -> np.ndarray:
        symbol = np.broadcast_to(np.asarray(self.system.linear_symbol(N_max), dtype=float),
                                 (self.system.m, 2 * N_max + 1))
        return np.concatenate([symbol, symbol], axis=0)

    def nonlinear(self, coeffs: np.ndarray, t: float) -> np.ndarray:
        m = self.system.m
        state, xi = coeffs[:m], coeffs[m:]
        return np.concatenate([self.system.nonlinear(state, t),
                               self.system.nonlinear_derivative(state, xi, t)], axis=0)

    def nonlinear_derivative(self, coeffs: np.ndarray, dcoeffs: np.ndarray, t: float) -> np.ndarray:
        return central_difference(self.nonlinear, coeffs, dcoeffs, t)


@cached(prefix="etdrk4")
def etdrk4_coefficients(symbol: np.ndarray, dt: float, n_roots: int = N_ROOTS) -> Tuple[np.ndarray, ...]:
    """exp(dt·L), exp(dt·L/2) and the f0..f3 weights by contour means over a half circle"""
    L = dt * np.asarray(symbol, dtype=float)
    roots = np.exp(1j * np.pi * (np.arange(n_roots) + 0.5) / n_roots)
    lr = L[..., None] + roots
    lr2 = lr**2
    lr3 = lr**3
    exp_lr = np.exp(lr)
    tables = (
        np.exp(L),
        np.exp(0.5 * L),
        dt * ((np.exp(lr / 2.0) - 1.0) / lr).mean(-1).real,
        dt * ((-4.0 - lr + exp_lr * (4.0 - 3.0 * lr + lr2)) / lr3).mean(-1).real,
        dt * ((2.0 + lr + exp_lr * (lr - 2.0)) / lr3).mean(-1).real,
        dt * ((-4.0 - 3.0 * lr - lr2 + exp_lr * (4.0 - lr)) / lr3).mean(-1).real,
    )
    for table in tables:
        table.setflags(write=False)
    return tables


class ETDRK4Integrator:
    """ETDRK4 stepper for a diagonal linear symbol plus explicit nonlinear term"""

    def __init__(self, system: EvolutionSystem, dt: float, N_max: int, n_roots: int = N_ROOTS):
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.system = system
        self.dt = float(dt)
        self.N_max = N_max
        symbol = np.asarray(system.linear_symbol(N_max), dtype=float)
        self.E, self.E2, self.f0, self.f1, self.f2, self.f3 = etdrk4_coefficients(symbol, self.dt, n_roots)

    def step(self, coeffs: np.ndarray, t: float) -> np.ndarray:
        dt = self.dt
        nonlinear = self.system.nonlinear
        n0 = nonlinear(coeffs, t)
        s1 = self.E2 * coeffs + self.f0 * n0
        n1 = nonlinear(s1, t + 0.5 * dt)
        s2 = self.E2 * coeffs + self.f0 * n1
        n2 = nonlinear(s2, t + 0.5 * dt)
        s3 = self.E2 * s1 + self.f0 * (2.0 * n2 - n0)
        n3 = nonlinear(s3, t + dt)
        new = self.E * coeffs + self.f1 * n0 + 2.0 * self.f2 * (n1 + n2) + self.f3 * n3
        if not np.all(np.isfinite(new)):
            raise DivergenceError(f"non-finite state at t={t + dt:.6g}", t=t + dt)
        return new


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray                # (samples, m, 2N+1)
    dt_policy: Dict = field(default_factory=dict)
    diverged_at: Optional[float] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=complex)
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    def field(self, index: int) -> FourierField:
        return FourierField(self.states[index])

    @property
    def final(self) -> FourierField:
        return self.field(-1)

    def norm_series(self) -> Dict[str, np.ndarray]:
        return {
            't': self.times,
            'L2': np.array([sobolev_norm(s, 0) for s in self.states]),
            'H1': np.array([sobolev_norm(s, 1) for s in self.states]),
            'H2': np.array([sobolev_norm(s, 2) for s in self.states]),
        }

    def state_rows(self) -> List[tuple]:
        """(t, component, n, re, im) rows"""
        rows = []
        N_max = (self.states.shape[-1] - 1) // 2
        for t, state in zip(self.times, self.states):
            for comp in range(state.shape[0]):
                for n, c in zip(wavenumbers(N_max), state[comp]):
                    rows.append((float(t), comp, int(n), float(c.real), float(c.imag)))
        return rows


def _as_coeffs(state) -> np.ndarray:
    return np.array(state.coeffs if isinstance(state, FourierField) else state, dtype=complex)


def step(state: FourierField, t: float, dt: float, system: EvolutionSystem) -> FourierField:
    """One ETDRK4 step"""
    coeffs = _as_coeffs(state)
    integrator = ETDRK4Integrator(system, dt, (coeffs.shape[-1] - 1) // 2)
    return FourierField(integrator.step(coeffs, t))


def integrate(state: FourierField, t0: float, t1: float, system: EvolutionSystem, dt: float = DEFAULT_DT,
              stride: int = 1, adaptive: bool = False, tol: float = 1e-8,
              stop_on_divergence: bool = False) -> Trajectory:
    """
    Integrate from t0 to t1.

    Fixed mode uses n = ceil((t1 − t0)/dt) equal steps, so splitting an interval at a step
    boundary reproduces the single run. Samples are kept every `stride` steps plus the end.
    With stop_on_divergence the partial trajectory is returned with diverged_at set.
    """
    if not t1 > t0:
        raise ValueError(f"need t1 > t0, got t0={t0}, t1={t1}")
    coeffs = _as_coeffs(state)
    if adaptive:
        return _integrate_adaptive(coeffs, t0, t1, system, dt, stride, tol, stop_on_divergence)

    n_steps = max(1, int(math.ceil((t1 - t0) / dt - 1e-9)))
    dt_eff = (t1 - t0) / n_steps
    integrator = ETDRK4Integrator(system, dt_eff, (coeffs.shape[-1] - 1) // 2)

    times, states = [t0], [coeffs]
    diverged_at = None
    for k in range(n_steps):
        t = t0 + k * dt_eff
        try:
            coeffs = integrator.step(coeffs, t)
        except DivergenceError as e:
            if not stop_on_divergence:
                raise
            diverged_at = e.t if e.t is not None else t + dt_eff
            logger.warning(f"⚠️  {getattr(system, 'name', 'system')} diverged at t={diverged_at:.4g}")
            break
        if (k + 1) % stride == 0 or k + 1 == n_steps:
            times.append(t0 + (k + 1) * dt_eff)
            states.append(coeffs)

    return Trajectory(np.array(times), np.array(states), {"mode": "fixed", "dt": dt_eff, "steps": n_steps},
                      diverged_at=diverged_at)


def _integrate_adaptive(coeffs, t0, t1, system, dt, stride, tol, stop_on_divergence) -> Trajectory:
    """Step doubling: accept when one step and two half steps agree to tol (relative)"""
    N_max = (coeffs.shape[-1] - 1) // 2
    t = t0
    times, states, accepted_dts = [t0], [coeffs], []
    rejected = 0
    diverged_at = None
    while t < t1 - 1e-14 * max(1.0, abs(t1)):
        h = min(dt, t1 - t)
        try:
            big = ETDRK4Integrator(system, h, N_max).step(coeffs, t)
            half = ETDRK4Integrator(system, 0.5 * h, N_max)
            small = half.step(half.step(coeffs, t), t + 0.5 * h)
        except DivergenceError as e:
            if not stop_on_divergence:
                raise
            diverged_at = e.t if e.t is not None else t + h
            break
        scale = max(sobolev_norm(small, 1), 1e-300)
        err = sobolev_norm(big - small, 1) / scale
        if err <= tol or h < 1e-12:
            t += h
            # Richardson extrapolation for a fourth-order pair
            coeffs = small + (small - big) / 15.0
            accepted_dts.append(h)
            if len(accepted_dts) % stride == 0 or t >= t1 - 1e-14 * max(1.0, abs(t1)):
                times.append(t)
                states.append(coeffs)
        else:
            rejected += 1
        factor = 2.0 if err == 0 else min(2.0, max(0.2, 0.9 * (tol / err) ** 0.2))
        dt = h * factor

    policy = {"mode": "adaptive", "tol": tol, "dts": accepted_dts, "rejected": rejected}
    logger.debug(f"✅ adaptive run: {len(accepted_dts)} accepted, {rejected} rejected steps")
    return Trajectory(np.array(times), np.array(states), policy, diverged_at=diverged_at)


# ---- variational flow -------------------------------------------------------

def co_step(state: FourierField, xi: FourierField, t: float, dt: float,
            system: EvolutionSystem) -> Tuple[FourierField, FourierField]:
    """Advance (state, ξ) together; ξ follows the linearization about the state"""
    m = state.n_components
    joint = JointSystem(system)
    coeffs = np.concatenate([_as_coeffs(state), _as_coeffs(xi)], axis=0)
    new = ETDRK4Integrator(joint, dt, state.N_max).step(coeffs, t)
    return FourierField(new[:m]), FourierField(new[m:])


def variational_step(state: FourierField, xi: FourierField, t: float, dt: float,
                     system: EvolutionSystem) -> FourierField:
    return co_step(state, xi, t, dt, system)[1]


def integrate_variational(state: FourierField, xi: FourierField, t0: float, t1: float,
                          system: EvolutionSystem, dt: float = DEFAULT_DT, stride: int = 1,
                          stop_on_divergence: bool = False) -> Tuple[Trajectory, Trajectory]:
    """Joint trajectories of the state and of ξ"""
    m = state.n_components
    joint_state = FourierField(np.concatenate([_as_coeffs(state), _as_coeffs(xi)], axis=0))
    joint = integrate(joint_state, t0, t1, JointSystem(system), dt=dt, stride=stride,
                      stop_on_divergence=stop_on_divergence)
    first = Trajectory(joint.times, joint.states[:, :m], joint.dt_policy, joint.diverged_at)
    second = Trajectory(joint.times, joint.states[:, m:], joint.dt_policy, joint.diverged_at)
    return first, second


# ---- monitors ---------------------------------------------------------------

@dataclass
class NormFit:
    C: float
    delta: float
    C_star: float


@dataclass
class DissipativityReport:
    times: np.ndarray
    norms: Dict[str, np.ndarray]
    fits: Dict[str, NormFit]
    smoothing_Q: float
    sqrt_t_H2: np.ndarray
    flags: Dict[str, list]
    divergence: bool = False

    @property
    def violated(self) -> bool:
        return self.divergence or any(self.flags.values())

    def summary(self) -> dict:
        return {
            'violated': self.violated,
            'divergence': self.divergence,
            'smoothing_Q': self.smoothing_Q,
            'fits': {k: vars(v) for k, v in self.fits.items()},
            'flag_counts': {k: len(v) for k, v in self.flags.items()},
        }


def _fit_norm(t: np.ndarray, E: np.ndarray, tol: float) -> NormFit:
    """Fit E(t) ≤ C·E(0)·e^{−δt} + C_* on the first half of the samples"""
    t_end = t[-1] - t[0]
    fit = t - t[0] <= 0.5 * t_end
    late = fit & (t - t[0] >= 0.375 * t_end)
    C_star = (1.0 + tol) * float(np.max(E[late])) if np.any(late) else (1.0 + tol) * float(E[fit][-1])
    E0 = max(float(E[0]), 1e-300)

    above = fit & (E > 2.0 * C_star)
    if np.count_nonzero(above) >= 3:
        slope = np.polyfit(t[above] - t[0], np.log(E[above] - C_star), 1)[0]
        delta = max(0.0, -float(slope))
    else:
        delta = 0.0

    envelope = np.maximum(E[fit] - C_star, 0.0) / (E0 * np.exp(-delta * (t[fit] - t[0])))
    C = max(1.0, float(np.max(envelope)))
    return NormFit(C=C, delta=delta, C_star=C_star)


def dissipativity_report(traj: Trajectory, tol: float = VIOLATION_TOL) -> DissipativityReport:
    """
    Discrete dissipativity and smoothing monitors.

    Constants are fitted on the first half of the run and the bound is checked on every sample;
    violations are flagged, never raised.
    """
    series = traj.norm_series()
    t = series['t']
    finite = np.all([np.all(np.isfinite(series[k])) for k in ('L2', 'H1', 'H2')])
    divergence = traj.diverged_at is not None or not finite

    fits: Dict[str, NormFit] = {}
    flags: Dict[str, list] = {}
    for name in ('L2', 'H1', 'H2'):
        E = series[name]
        if len(t) < 4 or not np.all(np.isfinite(E)):
            fits[name] = NormFit(float('nan'), float('nan'), float('nan'))
            flags[name] = [float(x) for x in t[~np.isfinite(E)]]
            continue
        fit = _fit_norm(t, E, tol)
        fits[name] = fit
        bound = (1.0 + tol) * (fit.C * E[0] * np.exp(-fit.delta * (t - t[0])) + fit.C_star)
        flags[name] = [float(x) for x in t[E > bound]]

    elapsed = t - t[0]
    sqrt_t_H2 = np.sqrt(elapsed) * series['H2']
    C_star_h2 = fits['H2'].C_star if np.isfinite(fits['H2'].C_star) else 0.0
    excess = np.sqrt(elapsed) * np.maximum(series['H2'] - C_star_h2, 0.0)
    smoothing_Q = float(np.max(excess[1:])) if len(excess) > 1 and np.all(np.isfinite(excess)) else float('inf')

    report = DissipativityReport(t, series, fits, smoothing_Q, sqrt_t_H2, flags, divergence)
    if report.violated:
        logger.warning(f"⚠️  dissipativity monitor flagged violations: {report.summary()['flag_counts']}")
    return report


def fit_lipschitz_growth(pairs: Sequence[Tuple[Trajectory, Trajectory]]) -> float:
    """Smallest C̃ with ‖u₁(t) − u₂(t)‖_{H¹} ≤ e^{C̃t}‖u₁(0) − u₂(0)‖_{H¹} on every sampled pair"""
    rates = []
    for first, second in pairs:
        diff = first.states - second.states
        norms = np.array([sobolev_norm(d, 1) for d in diff])
        elapsed = first.times - first.times[0]
        if norms[0] == 0.0:
            continue
        valid = (elapsed > 0) & (norms > 0)
        rates.append(np.max(np.log(norms[valid] / norms[0]) / elapsed[valid]))
    return float(np.max(rates)) if rates else float('-inf')


def absorbing_ball_check(traj: Trajectory, radius: float) -> dict:
    """First time after which ‖u(t)‖_{H¹} stays inside the ball"""
    h1 = traj.norm_series()['H1']
    outside = np.nonzero(h1 > radius)[0]
    if len(outside) == 0:
        entry = 0
    elif outside[-1] == len(h1) - 1:
        return {'entered': False, 'entry_time': None, 'final_norm': float(h1[-1]), 'radius': radius}
    else:
        entry = int(outside[-1]) + 1
    return {
        'entered': True,
        'entry_time': float(traj.times[entry]),
        'max_after_entry': float(np.max(h1[entry:])),
        'final_norm': float(h1[-1]),
        'radius': radius,
    }


def measure_absorbing_radius(system: EvolutionSystem, initial_states: Sequence[FourierField], t_end: float,
                             dt: float = DEFAULT_DT, margin: float = 1.1, workers: Optional[int] = None) -> float:
    """Empirical H¹ absorbing radius: max over runs of sup_{t ≥ t_end/2} ‖u(t)‖_{H¹}, times a margin"""
    def late_sup(u0: FourierField) -> float:
        traj = integrate(u0, 0.0, t_end, system, dt=dt, stride=max(1, int(0.05 * t_end / dt)))
        h1 = traj.norm_series()['H1']
        return float(np.max(h1[traj.times >= 0.5 * t_end]))

    sups = run_parallel(late_sup, initial_states, workers=workers, label="absorbing radius")
    radius = margin * max(sups)
    logger.info(f"✅ absorbing H¹ radius ≈ {radius:.4g} from {len(sups)} runs")
    return radius
