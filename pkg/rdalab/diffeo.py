"""
Change of variables u = a·w for scalar RDA equations

The factor a(u) = exp(½∫_{−π}^x f(P_K u) − ⟨f(P_K u)⟩ ds) is explicit; its inverse a(w) solves the
fixed point y = ½∫(f(P_K(e^y w)) − ⟨·⟩), a = e^y. The linear solvers Υ (first-order periodic ODE
with a mean constraint) and Υ^K (its K-projected perturbation) are the building blocks of the
fixed-point analysis and are exposed for probing the K-dependence of the contraction factor.

Spectral antiderivatives are exact for band-limited mean-zero integrands.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize

from alarms import DivergenceError, KTooSmallError, PreconditionError, ResolutionError, TruncationError
from campaign import run_parallel
from rda_dynamics import RDASystem
from spectral_core import (
    DEFAULT_PADDING,
    FourierField,
    from_grid,
    grid,
    padded_size,
    pointwise_apply,
    project_coeffs,
    project_PK,
    sobolev_norm,
    to_grid,
    wavenumbers,
)

logger = logging.getLogger(__name__)

DAMPING = 0.8
TOL = 1e-10
MAX_ITER = 200
RESOLUTION_TOL = 1e-8
MEAN_TOL = 1e-10
STALL_LIMIT = 3


@dataclass
class DiffeoResult:
    a: FourierField
    a_inv: FourierField
    dx_a: FourierField
    dxx_a: FourierField
    K: int
    y: FourierField
    dt_a: Optional[FourierField] = None
    iterations: int = 0
    method: str = "explicit"
    residual: float = 0.0
    observed_rate: Optional[float] = None
    a_at_minus_pi: float = 1.0
    min_a: float = 1.0
    a_values: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def positive(self) -> bool:
        return self.min_a > 0.0


# ---- spectral helpers -------------------------------------------------------

def periodic_antiderivative(h: np.ndarray) -> np.ndarray:
    """∫_{−π}^x h for mean-zero h (..., 2N+1); the result vanishes at x = −π"""
    h = np.asarray(h, dtype=complex)
    N_max = (h.shape[-1] - 1) // 2
    n = wavenumbers(N_max)
    y = np.zeros_like(h)
    nonzero = n != 0
    y[..., nonzero] = h[..., nonzero] / (1j * n[nonzero])
    signs = np.where(n % 2 == 0, 1.0, -1.0)
    y[..., N_max] = -np.sum(y[..., nonzero] * signs[nonzero], axis=-1)
    return y


def value_at_minus_pi(coeffs: np.ndarray) -> np.ndarray:
    N_max = (coeffs.shape[-1] - 1) // 2
    signs = np.where(wavenumbers(N_max) % 2 == 0, 1.0, -1.0)
    return np.sum(coeffs * signs, axis=-1)


def _product(a: np.ndarray, b: np.ndarray, padding: float = DEFAULT_PADDING) -> np.ndarray:
    """Dealiased product of coefficient arrays, broadcast over leading dims"""
    N_max = (a.shape[-1] - 1) // 2
    M = padded_size(N_max, padding)
    return from_grid(to_grid(a, M) * to_grid(b, M), N_max)


def w1inf(field: FourierField, oversample: float = 4.0) -> float:
    """‖v‖_∞ + ‖∂ₓv‖_∞ on an oversampled grid"""
    M = padded_size(field.N_max, oversample)
    values = to_grid(field.coeffs, M)
    slopes = to_grid(field.coeffs * (1j * field.wavenumbers), M)
    return float(np.max(np.abs(values)) + np.max(np.abs(slopes)))


def w1inf_bounds(result: DiffeoResult) -> float:
    return w1inf(result.a) + w1inf(result.a_inv)


def _scalar_f(system: RDASystem) -> Tuple[Callable, Callable]:
    if system.scalar_f is None or system.scalar_df is None:
        raise ValueError(f"system '{system.name}' has no scalar f; the change of variables needs m = 1")
    return system.scalar_f, system.scalar_df


def _real(coeffs: np.ndarray) -> np.ndarray:
    return 0.5 * (coeffs + np.conj(coeffs[..., ::-1]))


def _check_resolution(phi: np.ndarray, tol: float, what: str):
    N_max = (phi.shape[-1] - 1) // 2
    scale = float(np.max(np.abs(phi)))
    if scale == 0.0 or N_max < 5:
        return
    tail = np.abs(wavenumbers(N_max)) > 0.8 * N_max
    ratio = float(np.max(np.abs(phi[..., tail]))) / scale
    if ratio > tol:
        raise ResolutionError(
            f"{what} is not resolved at N_max={N_max}: tail/peak = {ratio:.3g} > {tol:.1e}",
            tail_ratio=ratio, N_max=N_max,
        )


def _factor_fields(y: np.ndarray, phi: np.ndarray, dphi_dx: np.ndarray, K: int, padding: float):
    """a, a⁻¹, ∂ₓa, ∂ₓ²a from the exponent y, φ = f(P_K u) and f'(P_K u)·∂ₓP_K u"""
    N_max = (y.shape[-1] - 1) // 2
    M = padded_size(N_max, padding)
    yv = to_grid(y, M).real
    a_vals = np.exp(yv)
    h = np.array(phi)
    h[N_max] = 0.0
    hv = to_grid(h, M).real
    dv = to_grid(dphi_dx, M).real
    a = _real(from_grid(a_vals, N_max))
    a_inv = _real(from_grid(np.exp(-yv), N_max))
    dx_a = _real(from_grid(0.5 * hv * a_vals, N_max))
    dxx_a = _real(from_grid(0.25 * hv**2 * a_vals + 0.5 * a_vals * dv, N_max))
    return a, a_inv, dx_a, dxx_a, a_vals


def _phi_of(pk: np.ndarray, f: Callable, df: Callable, padding: float):
    """φ = f(P_K u) and f'(P_K u)·∂ₓP_K u as coefficients"""
    N_max = (pk.shape[-1] - 1) // 2
    M = padded_size(N_max, padding)
    pv = to_grid(pk, M).real
    pxv = to_grid(pk * (1j * wavenumbers(N_max)), M).real
    phi = _real(from_grid(f(pv), N_max))
    dphi_dx = _real(from_grid(df(pv) * pxv, N_max))
    return phi, dphi_dx


# ---- forward map --------------------------------------------------------------

def forward_a(u: FourierField, K: int, system: RDASystem, resolution_tol: float = RESOLUTION_TOL,
              padding: float = DEFAULT_PADDING) -> DiffeoResult:
    """Explicit factor a(u); subtracting the mean of f(P_K u) makes the exponent periodic"""
    if u.n_components != 1:
        raise ValueError("forward_a needs a scalar field")
    f, df = _scalar_f(system)
    pk = project_PK(u, K).coeffs[0]
    phi, dphi_dx = _phi_of(pk, f, df, padding)
    _check_resolution(phi, resolution_tol, "f(P_K u)")

    h = np.array(phi)
    h[u.N_max] = 0.0
    y = _real(0.5 * periodic_antiderivative(h))
    a, a_inv, dx_a, dxx_a, a_vals = _factor_fields(y, phi, dphi_dx, K, padding)
    return DiffeoResult(
        a=FourierField(a), a_inv=FourierField(a_inv), dx_a=FourierField(dx_a), dxx_a=FourierField(dxx_a),
        K=K, y=FourierField(y), iterations=0, method="explicit",
        a_at_minus_pi=float(value_at_minus_pi(a).real), min_a=float(np.min(a_vals)), a_values=a_vals,
    )


def W_map(u: FourierField, K: int, system: RDASystem, result: Optional[DiffeoResult] = None) -> FourierField:
    """w = a(u)⁻¹·u"""
    result = result or forward_a(u, K, system)
    return pointwise_apply(result.a_inv, u, fn=lambda a, v: a * v)


# ---- inverse map --------------------------------------------------------------

class _InverseProblem:
    """G(y) = ½∫(f(P_K(e^y w)) − ⟨·⟩) on coefficient arrays"""

    def __init__(self, w: np.ndarray, K: int, f: Callable, padding: float):
        self.N_max = (w.shape[-1] - 1) // 2
        self.K = K
        self.f = f
        self.M = padded_size(self.N_max, padding)
        self.w_vals = to_grid(w, self.M).real

    def __call__(self, y: np.ndarray) -> np.ndarray:
        yv = to_grid(y, self.M).real
        u = from_grid(np.exp(yv) * self.w_vals, self.N_max)
        pk = project_coeffs(u, self.K)
        phi = from_grid(self.f(to_grid(pk, self.M).real), self.N_max)
        phi[self.N_max] = 0.0
        return _real(0.5 * periodic_antiderivative(phi))

    def sup(self, coeffs: np.ndarray) -> float:
        return float(np.max(np.abs(to_grid(coeffs, self.M))))


def inverse_a(w: FourierField, K: int, system: RDASystem, max_iter: int = MAX_ITER, tol: float = TOL,
              damping: float = DAMPING, y0: Union[FourierField, np.ndarray, None] = None,
              padding: float = DEFAULT_PADDING) -> DiffeoResult:
    """
    Solve for a(w) = e^y by damped fixed-point iteration.

    Starts from y0 (default: the explicit exponent computed as if w were u). When the residual
    grows STALL_LIMIT times in a row, or max_iter is reached, the same equation is handed to
    scipy's hybrid Powell solver on the values of y at the 2N+1 base grid points.
    """
    if w.n_components != 1:
        raise ValueError("inverse_a needs a scalar field")
    if K > w.N_max:
        raise TruncationError(f"P_K with K={K} exceeds N_max={w.N_max}")
    f, df = _scalar_f(system)
    wc = w.coeffs[0]
    problem = _InverseProblem(wc, K, f, padding)

    if y0 is None:
        y = forward_a(w, K, system, resolution_tol=np.inf, padding=padding).y.coeffs[0].copy()
    else:
        y = np.array(y0.coeffs[0] if isinstance(y0, FourierField) else y0, dtype=complex)

    method = "picard"
    residuals = []
    iterations = 0
    converged = False
    stalls = 0
    for iterations in range(1, max_iter + 1):
        G = problem(y)
        residual = problem.sup(G - y)
        residuals.append(residual)
        if residual <= tol:
            converged = True
            break
        if len(residuals) > 1 and residual > residuals[-2]:
            stalls += 1
            if stalls >= STALL_LIMIT:
                break
        else:
            stalls = 0
        y = y + damping * (G - y)
        if not np.all(np.isfinite(y)):
            break

    if not converged:
        logger.warning(f"⚠️  fixed point stalled after {iterations} iterations "
                       f"(residual {residuals[-1]:.3g}); switching to hybrid solver")
        y, residual = _hybrid_solve(problem, y if np.all(np.isfinite(y)) else np.zeros_like(y))
        residuals.append(residual)
        method = "hybr"
        if not residual <= 10.0 * tol:
            raise DivergenceError(f"inverse factor did not converge (residual {residual:.3g})",
                                  last_residual=residual)
        converged = True
        y = _real(problem(y))

    rate = None
    if len(residuals) >= 3 and residuals[-2] > 0 and residuals[-3] > 0:
        rate = float(residuals[-2] / residuals[-3])

    u = from_grid(np.exp(to_grid(y, problem.M).real) * problem.w_vals, w.N_max)
    pk = project_coeffs(u, K)
    phi, dphi_dx = _phi_of(pk, f, df, padding)
    a, a_inv, dx_a, dxx_a, a_vals = _factor_fields(y, phi, dphi_dx, K, padding)
    logger.debug(f"✅ inverse factor: {method}, {iterations} iterations, residual {residuals[-1]:.2e}")
    return DiffeoResult(
        a=FourierField(a), a_inv=FourierField(a_inv), dx_a=FourierField(dx_a), dxx_a=FourierField(dxx_a),
        K=K, y=FourierField(y), iterations=iterations, method=method, residual=float(residuals[-1]),
        observed_rate=rate, a_at_minus_pi=float(value_at_minus_pi(a).real), min_a=float(np.min(a_vals)),
        a_values=a_vals,
    )


def _hybrid_solve(problem: _InverseProblem, y: np.ndarray) -> Tuple[np.ndarray, float]:
    size = 2 * problem.N_max + 1

    def residual(values: np.ndarray) -> np.ndarray:
        coeffs = from_grid(values.astype(complex), problem.N_max)
        return to_grid(problem(coeffs), size).real - values

    start = to_grid(y, size).real
    solution = optimize.root(residual, start, method='hybr', options={'xtol': 1e-13})
    coeffs = _real(from_grid(solution.x.astype(complex), problem.N_max))
    return coeffs, problem.sup(problem(coeffs) - coeffs)


def U_map(w: FourierField, K: int, system: RDASystem, result: Optional[DiffeoResult] = None, **kwargs) -> FourierField:
    """u = a(w)·w"""
    result = result or inverse_a(w, K, system, **kwargs)
    return pointwise_apply(result.a, w, fn=lambda a, v: a * v)


def a_time_derivative(w: FourierField, K: int, system: RDASystem, result: Optional[DiffeoResult] = None,
                      t: float = 0.0, padding: float = DEFAULT_PADDING) -> FourierField:
    """
    ∂ₜa along the original flow through u = a(w)·w:
    ∂ₜa = a·½∫_{−π}^x (f'(P_K u)·P_K∂ₜu − ⟨f'(P_K u)·P_K∂ₜu⟩)
    """
    _, df = _scalar_f(system)
    result = result or inverse_a(w, K, system, padding=padding)
    u = U_map(w, K, system, result=result).coeffs
    rhs = system.linear_symbol(w.N_max) * u + system.nonlinear(u, t)
    ut_K = project_coeffs(rhs[0], K)
    pk = project_coeffs(u[0], K)

    M = padded_size(w.N_max, padding)
    integrand = from_grid(df(to_grid(pk, M).real) * to_grid(ut_K, M).real, w.N_max)
    integrand[w.N_max] = 0.0
    yt = 0.5 * periodic_antiderivative(integrand)
    return FourierField(_real(_product(result.a.coeffs[0], yt, padding)))


# ---- the linear solvers ---------------------------------------------------------

def _upsilon_coeffs(phi: np.ndarray, h: np.ndarray, padding: float = DEFAULT_PADDING) -> Tuple[np.ndarray, np.ndarray]:
    """
    Solve ξ' = φξ − ⟨φξ⟩ + h, ξ(−π) = ξ(π) = 0 for every row of h (..., 2N+1).

    With c = ⟨φ⟩, Φ̃ the periodic antiderivative of φ − c and q = e^{−Φ̃}g,
    X[g](x) = e^{Φ̃(x)}[Σ q_n e^{inx}/κ_n − e^{c(x+π)}Σ q_n(−1)^n/κ_n], κ_n = in − c,
    and ξ = X[h] − D·X[1] with D = X[h](π)/X[1](π).
    """
    N_max = (phi.shape[-1] - 1) // 2
    M = padded_size(N_max, padding)
    N_int = (M - 2) // 2
    x = grid(M)

    c = complex(phi[N_max]).real
    centered = np.array(phi, dtype=complex)
    centered[N_max] = 0.0
    Phi_vals = to_grid(periodic_antiderivative(centered), M).real
    growth = np.exp(c * (x + np.pi))

    n = wavenumbers(N_int)
    kappa = 1j * n - c
    singular = np.abs(kappa) < 1e-14
    safe = np.where(singular, 1.0, kappa)
    signs = np.where(n % 2 == 0, 1.0, -1.0)

    def X(g_vals: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        q = from_grid(np.exp(-Phi_vals) * g_vals, N_int)
        ratio = np.where(singular, 0.0, q / safe)
        S = np.sum(ratio * signs, axis=-1)
        inner = to_grid(ratio, M) - growth * S[..., None]
        at_pi = (1.0 - np.exp(2.0 * np.pi * c)) * S
        if np.any(singular):
            q0 = q[..., N_int]
            inner = inner + q0[..., None] * (x + np.pi)
            at_pi = at_pi + 2.0 * np.pi * q0
        return np.exp(Phi_vals) * inner, at_pi

    h_vals = to_grid(h, M)
    Xh, Xh_pi = X(h_vals)
    X1, X1_pi = X(np.ones(M, dtype=complex))
    D = Xh_pi / X1_pi
    xi = from_grid(Xh - D[..., None] * X1, N_max)
    return xi, D


def _check_mean(h: FourierField):
    scale = max(1.0, float(np.max(np.abs(h.coeffs))))
    mean = abs(h.coeffs[0, h.N_max])
    if mean > MEAN_TOL * scale:
        raise PreconditionError(f"Υ needs ⟨h⟩ = 0, got |⟨h⟩| = {mean:.3g}", mean=mean)


def upsilon(phi: FourierField, h: FourierField, return_constant: bool = False,
            padding: float = DEFAULT_PADDING):
    """Unique solution of ξ' = φξ − ⟨φξ⟩ + h with ξ(−π) = ξ(π) = 0"""
    _check_mean(h)
    xi, D = _upsilon_coeffs(phi.coeffs[0], h.coeffs[0], padding)
    if phi.is_real() and h.is_real():
        xi = _real(xi)
    field_ = FourierField(xi)
    return (field_, complex(D)) if return_constant else field_


class _ProjectedOperator:
    """𝓡ξ = Υ_{φψ}(−φ(1−P_K)(ψξ) + ⟨φ(1−P_K)(ψξ)⟩), vectorized over rows of ξ"""

    def __init__(self, phi: np.ndarray, psi: np.ndarray, K: int, padding: float):
        self.phi, self.psi, self.K, self.padding = phi, psi, K, padding
        self.phipsi = _product(phi, psi, padding)
        self.N_max = (phi.shape[-1] - 1) // 2

    def source(self, h: np.ndarray) -> np.ndarray:
        return _upsilon_coeffs(self.phipsi, h, self.padding)[0]

    def __call__(self, xi: np.ndarray) -> np.ndarray:
        tail = _product(self.psi, xi, self.padding)
        tail = tail - project_coeffs(tail, self.K)
        forcing = -_product(self.phi, tail, self.padding)
        forcing[..., self.N_max] = 0.0
        return _upsilon_coeffs(self.phipsi, forcing, self.padding)[0]

    def matrix(self) -> np.ndarray:
        size = 2 * self.N_max + 1
        columns = self(np.eye(size, dtype=complex))
        return columns.T

    def h1_norm(self) -> float:
        weights = np.sqrt(2.0 * np.pi * (wavenumbers(self.N_max) ** 2 + 1.0))
        weighted = weights[:, None] * self.matrix() / weights[None, :]
        return float(np.linalg.norm(weighted, 2))


@dataclass
class UpsilonKResult:
    xi: FourierField
    contraction_factor: float
    observed_ratio: Optional[float]
    iterations: int


def upsilon_K(phi: FourierField, psi: FourierField, h: FourierField, K: int, max_iter: int = 500,
              tol: float = 1e-12, return_details: bool = False, padding: float = DEFAULT_PADDING):
    """
    Solve ξ' = φP_K(ψξ) − ⟨φP_K(ψξ)⟩ + h, ξ(±π) = 0 by iterating ξ ← 𝓡ξ + Υ_{φψ}h.

    The contraction factor is the H¹ operator norm of 𝓡 on the truncated space; a factor ≥ 1
    means K is too small.
    """
    _check_mean(h)
    if K > phi.N_max:
        raise TruncationError(f"P_K with K={K} exceeds N_max={phi.N_max}")
    op = _ProjectedOperator(phi.coeffs[0], psi.coeffs[0], K, padding)
    factor = op.h1_norm()
    if factor >= 1.0:
        raise KTooSmallError(f"𝓡 is not a contraction at K={K} (factor {factor:.3g})",
                             contraction_factor=factor, K=K)

    base = op.source(h.coeffs[0])
    xi = base
    previous_step = None
    ratio = None
    iterations = 0
    for iterations in range(1, max_iter + 1):
        new = op(xi) + base
        step = sobolev_norm(new - xi, 1)
        xi = new
        if previous_step is not None and previous_step > 0:
            ratio = step / previous_step
        previous_step = step
        if step <= tol * max(1.0, sobolev_norm(xi, 1)):
            break
    else:
        raise DivergenceError(f"Υ^K iteration did not converge in {max_iter} steps", last_residual=previous_step)

    if phi.is_real() and psi.is_real() and h.is_real():
        xi = _real(xi)
    result = UpsilonKResult(FourierField(xi), factor, ratio, iterations)
    return result if return_details else (result.xi, factor)


def collocation_solve_aK(phi: FourierField, psi: FourierField, h: FourierField) -> FourierField:
    """Dense Galerkin solve of ξ' = φψξ − ⟨φψξ⟩ + h, ξ(−π) = 0 with P_K = Id"""
    _check_mean(h)
    N_max = phi.N_max
    size = 2 * N_max + 1
    p = _product(phi.coeffs[0], psi.coeffs[0])
    n = wavenumbers(N_max)
    mult = np.zeros((size, size), dtype=complex)
    for row, nr in enumerate(n):
        diff = nr - n
        valid = np.abs(diff) <= N_max
        mult[row, valid] = p[diff[valid] + N_max]
    system = np.diag(1j * n) - mult
    rhs = np.array(h.coeffs[0], dtype=complex)
    # the mean row is redundant; replace it by ξ(−π) = 0
    system[N_max, :] = np.where(n % 2 == 0, 1.0, -1.0)
    rhs[N_max] = 0.0
    xi = np.linalg.solve(system, rhs)
    if phi.is_real() and psi.is_real() and h.is_real():
        xi = _real(xi)
    return FourierField(xi)


# ---- probes -----------------------------------------------------------------------

def contraction_probe(phi: FourierField, psi: FourierField, K_values: Sequence[int],
                      workers: Optional[int] = None) -> dict:
    """H¹ norm of 𝓡 per K and the log–log slope against K"""
    def factor(K: int) -> float:
        return _ProjectedOperator(phi.coeffs[0], psi.coeffs[0], int(K), DEFAULT_PADDING).h1_norm()

    factors = run_parallel(factor, K_values, workers=workers, label="contraction probe")
    slope = float(np.polyfit(np.log(K_values), np.log(factors), 1)[0]) if len(K_values) > 1 else float('nan')
    logger.info(f"✅ contraction factor slope {slope:.3f} over K={list(K_values)}")
    return {'K': [int(k) for k in K_values], 'factor': [float(v) for v in factors], 'slope': slope}


def find_K0(phi: FourierField, psi: FourierField, target: float = 0.5, K_start: int = 2) -> int:
    """Smallest K in the doubling sequence with contraction factor < target"""
    K = K_start
    while K <= phi.N_max:
        factor = _ProjectedOperator(phi.coeffs[0], psi.coeffs[0], K, DEFAULT_PADDING).h1_norm()
        logger.debug(f"🔁 K={K}: factor {factor:.4g}")
        if factor < target:
            return K
        K *= 2
    raise KTooSmallError(f"no K ≤ N_max={phi.N_max} reaches factor < {target}", contraction_factor=float('nan'), K=K)


def rough_profile(N_max: int, exponent: float = 0.55, amplitude: float = 1.0) -> FourierField:
    """1 + amplitude·Σ_{n≠0} |n|^{−exponent} e^{inx}; behaves like |x|^{exponent−1} near 0"""
    n = wavenumbers(N_max).astype(float)
    coeffs = np.where(n == 0, 1.0, amplitude * np.abs(np.where(n == 0, 1.0, n)) ** (-exponent))
    return FourierField(coeffs.astype(complex))


def a_lipschitz_probe(pairs: Sequence[Tuple[FourierField, FourierField]], K: int, system: RDASystem) -> float:
    """max ‖a(u₁) − a(u₂)‖_{W^{1,∞}} / ‖u₁ − u₂‖_{H¹} over the pairs"""
    ratios = []
    for u1, u2 in pairs:
        gap = sobolev_norm(u1 - u2, 1)
        if gap == 0.0:
            continue
        da = forward_a(u1, K, system).a - forward_a(u2, K, system).a
        ratios.append(w1inf(da) / gap)
    return float(max(ratios)) if ratios else 0.0


def random_smooth_field(rng: np.random.Generator, N_max: int, radius: float, modes: int = 6,
                        decay: float = 1.0) -> FourierField:
    """Real field with |n| ≤ modes, random direction, scaled to ‖·‖_{H¹} = radius·U(0,1]^{1/2}"""
    coeffs = np.zeros(2 * N_max + 1, dtype=complex)
    n = np.arange(1, modes + 1)
    values = (rng.normal(size=modes) + 1j * rng.normal(size=modes)) / n**decay
    coeffs[N_max + n] = values
    coeffs[N_max - n] = np.conj(values)
    coeffs[N_max] = rng.normal() * 0.5
    field_ = FourierField(coeffs)
    target = radius * np.sqrt(rng.uniform(0.05, 1.0))
    return field_ * (target / sobolev_norm(field_, 1))
