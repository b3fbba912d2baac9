"""
Fourier substrate for 2π-periodic fields on (−π, π)

Coefficients are stored per component for wavenumbers n = −N_max..N_max (index n + N_max).
Physical grids are x_j = −π + 2πj/M. Inner products use the unnormalized L²(−π, π)
convention, so ‖sin x‖² = π.
"""

import csv
import io
import logging
import math
import struct
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from alarms import TruncationError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
DEFAULT_NMAX = 128
DEFAULT_PADDING = 2.0
REAL_TOL = 1e-12

_HEADER = struct.Struct('<ii')


def wavenumbers(N_max: int) -> np.ndarray:
    return np.arange(-N_max, N_max + 1)


def grid(M: int) -> np.ndarray:
    return -np.pi + TWO_PI * np.arange(M) / M


def padded_size(N_max: int, padding: float = DEFAULT_PADDING) -> int:
    """Grid size of at least 2·padding·N_max points (even)"""
    return 2 * int(math.ceil(padding * N_max)) + 2


def _sign(N_max: int) -> np.ndarray:
    return np.where(wavenumbers(N_max) % 2 == 0, 1.0, -1.0)


def to_grid(coeffs: np.ndarray, M: int) -> np.ndarray:
    """Evaluate coefficient arrays (..., 2N+1) on the M-point grid, M ≥ 2N+1"""
    coeffs = np.asarray(coeffs)
    N_max = (coeffs.shape[-1] - 1) // 2
    if M < 2 * N_max + 1:
        raise ValueError(f"grid of {M} points cannot hold N_max={N_max}")
    spectrum = np.zeros(coeffs.shape[:-1] + (M,), dtype=complex)
    spectrum[..., wavenumbers(N_max) % M] = coeffs * _sign(N_max)
    return M * np.fft.ifft(spectrum, axis=-1)


def from_grid(values: np.ndarray, N_max: int) -> np.ndarray:
    """Coefficients |n| ≤ N_max of grid values (..., M)"""
    values = np.asarray(values)
    M = values.shape[-1]
    if M < 2 * N_max + 1:
        raise ValueError(f"grid of {M} points cannot resolve N_max={N_max}")
    spectrum = np.fft.fft(values, axis=-1) / M
    return spectrum[..., wavenumbers(N_max) % M] * _sign(N_max)


def coeffs_are_real(coeffs: np.ndarray, tol: float = REAL_TOL) -> bool:
    coeffs = np.asarray(coeffs)
    scale = max(1.0, float(np.max(np.abs(coeffs), initial=0.0)))
    return bool(np.max(np.abs(coeffs[..., ::-1] - np.conj(coeffs)), initial=0.0) <= tol * scale)


@dataclass(frozen=True, eq=False)
class FourierField:
    """Truncated Fourier series of an m-component periodic function"""

    coeffs: np.ndarray

    def __post_init__(self):
        data = np.array(self.coeffs, dtype=complex)
        if data.ndim == 1:
            data = data[None, :]
        if data.ndim != 2 or data.shape[1] % 2 != 1:
            raise ValueError(f"coefficients must have shape (m, 2N+1), got {data.shape}")
        data.setflags(write=False)
        object.__setattr__(self, 'coeffs', data)

    # ---- shape -------------------------------------------------------------

    @property
    def n_components(self) -> int:
        return self.coeffs.shape[0]

    @property
    def N_max(self) -> int:
        return (self.coeffs.shape[1] - 1) // 2

    @property
    def wavenumbers(self) -> np.ndarray:
        return wavenumbers(self.N_max)

    def mode(self, n: int, component: int = 0) -> complex:
        if abs(n) > self.N_max:
            return 0j
        return complex(self.coeffs[component, n + self.N_max])

    def component(self, index: int) -> 'FourierField':
        return FourierField(self.coeffs[index:index + 1])

    # ---- constructors ------------------------------------------------------

    @classmethod
    def zeros(cls, N_max: int, n_components: int = 1) -> 'FourierField':
        return cls(np.zeros((n_components, 2 * N_max + 1), dtype=complex))

    @classmethod
    def from_modes(cls, modes: Mapping, N_max: int, n_components: int = 1) -> 'FourierField':
        """modes maps n (or (n, component)) to a coefficient"""
        data = np.zeros((n_components, 2 * N_max + 1), dtype=complex)
        for key, value in modes.items():
            n, comp = (key, 0) if np.isscalar(key) else key
            if abs(n) > N_max:
                raise TruncationError(f"mode {n} outside N_max={N_max}")
            data[comp, n + N_max] += value
        return cls(data)

    @classmethod
    def from_physical(cls, values: np.ndarray, N_max: int) -> 'FourierField':
        values = np.asarray(values)
        if values.ndim == 1:
            values = values[None, :]
        return cls(from_grid(values, N_max))

    @classmethod
    def from_function(cls, fn: Callable, N_max: int, n_components: int = 1, padding: float = 4.0) -> 'FourierField':
        """Sample fn(x) on an oversampled grid; fn returns (M,) or (m, M) values"""
        M = padded_size(N_max, padding)
        values = np.asarray(fn(grid(M)))
        if values.ndim == 1:
            values = np.broadcast_to(values, (n_components, M))
        return cls(from_grid(values, N_max))

    # ---- arithmetic --------------------------------------------------------

    def _check(self, other: 'FourierField'):
        if self.coeffs.shape != other.coeffs.shape:
            raise ValueError(f"field shapes differ: {self.coeffs.shape} vs {other.coeffs.shape}")

    def __add__(self, other: 'FourierField') -> 'FourierField':
        self._check(other)
        return FourierField(self.coeffs + other.coeffs)

    def __sub__(self, other: 'FourierField') -> 'FourierField':
        self._check(other)
        return FourierField(self.coeffs - other.coeffs)

    def __neg__(self) -> 'FourierField':
        return FourierField(-self.coeffs)

    def __mul__(self, scalar: Union[float, complex]) -> 'FourierField':
        if isinstance(scalar, FourierField):
            raise TypeError("use pointwise_apply for products of fields")
        return FourierField(self.coeffs * scalar)

    __rmul__ = __mul__

    def is_real(self, tol: float = REAL_TOL) -> bool:
        """Conjugate symmetry c(−n) = conj(c(n)) on every component"""
        return coeffs_are_real(self.coeffs, tol)

    def physical(self, M: Optional[int] = None) -> np.ndarray:
        values = to_grid(self.coeffs, M or padded_size(self.N_max))
        return values.real if self.is_real() else values

    def resized(self, N_max: int) -> 'FourierField':
        """Zero-pad or truncate to a new N_max"""
        data = np.zeros((self.n_components, 2 * N_max + 1), dtype=complex)
        keep = min(N_max, self.N_max)
        data[:, N_max - keep:N_max + keep + 1] = self.coeffs[:, self.N_max - keep:self.N_max + keep + 1]
        return FourierField(data)

    def stack(self, *others: 'FourierField') -> 'FourierField':
        return FourierField(np.vstack([self.coeffs] + [o.coeffs for o in others]))


class EigenTable:
    """Eigenvalues of A = 1 − ∂ₓ² in non-decreasing order: λ₀ = 1, λ_{2n−1} = λ_{2n} = n² + 1"""

    @staticmethod
    def wavenumber(k: int) -> int:
        if k < 0:
            raise ValueError("eigenvalue index must be non-negative")
        return (k + 1) // 2

    @classmethod
    def eigenvalue(cls, k: int) -> int:
        n = cls.wavenumber(k)
        return n * n + 1

    @classmethod
    def table(cls, count: int) -> np.ndarray:
        return np.array([cls.eigenvalue(k) for k in range(count)], dtype=float)

    @staticmethod
    def lambda_minus(N: int) -> float:
        """λ_{2N}, the largest eigenvalue kept by P_N"""
        return float(N * N + 1)

    @staticmethod
    def lambda_plus(N: int) -> float:
        """λ_{2N+1}, the smallest eigenvalue removed by P_N"""
        return float((N + 1) ** 2 + 1)


# ---- operations ------------------------------------------------------------

def project_PK(field: FourierField, K: int) -> FourierField:
    """Zero every mode with |n| > K"""
    if K > field.N_max:
        raise TruncationError(f"P_K with K={K} exceeds N_max={field.N_max}")
    if K < 0:
        raise ValueError(f"K must be non-negative, got {K}")
    return FourierField(project_coeffs(field.coeffs, K))


def project_coeffs(coeffs: np.ndarray, K: int) -> np.ndarray:
    N_max = (coeffs.shape[-1] - 1) // 2
    out = np.array(coeffs, dtype=complex)
    out[..., np.abs(wavenumbers(N_max)) > K] = 0.0
    return out


def A_symbol(N_max: int) -> np.ndarray:
    n = wavenumbers(N_max)
    return (n * n + 1).astype(float)


def apply_A(field: FourierField) -> FourierField:
    return FourierField(field.coeffs * A_symbol(field.N_max))


def derivative(field: FourierField, order: int = 1) -> FourierField:
    return FourierField(field.coeffs * (1j * field.wavenumbers) ** order)


def sobolev_norm(field: Union[FourierField, np.ndarray], s: float) -> float:
    """(2π Σ (n²+1)^s |c_n|²)^{1/2} summed over components"""
    coeffs = field.coeffs if isinstance(field, FourierField) else np.asarray(field)
    N_max = (coeffs.shape[-1] - 1) // 2
    weight = A_symbol(N_max) ** s
    return float(np.sqrt(TWO_PI * np.sum(weight * np.abs(coeffs) ** 2)))


def inner_product(u: FourierField, v: FourierField) -> complex:
    """∫ u·conj(v) over (−π, π), summed over components"""
    u._check(v)
    return complex(TWO_PI * np.sum(u.coeffs * np.conj(v.coeffs)))


def mean_value(field: FourierField) -> Union[complex, np.ndarray]:
    means = field.coeffs[:, field.N_max]
    return complex(means[0]) if field.n_components == 1 else np.array(means)


def reflect(field: FourierField) -> FourierField:
    """x ↦ −x (same as x ↦ 2π − x on the periodic grid): c_n ↦ c_{−n}"""
    return FourierField(field.coeffs[:, ::-1])


def pointwise_apply(
    *fields: FourierField,
    fn: Callable,
    padding: float = DEFAULT_PADDING,
    pass_grid: bool = False,
    N_max: Optional[int] = None,
    real: Optional[bool] = None,
) -> FourierField:
    """
    Evaluate fn pointwise on a padded grid and transform back.

    fn receives one (m, M) array per input field (plus x=grid when pass_grid) and returns
    (M,) or (m_out, M) values. Modes above N_max are dropped, which dealiases quadratic
    products exactly for padding ≥ 3/2. When every input is real the grid values are real.
    """
    if not fields:
        raise ValueError("pointwise_apply needs at least one field")
    n_in = {f.N_max for f in fields}
    if len(n_in) != 1:
        raise ValueError(f"fields live on different truncations: {sorted(n_in)}")
    source_N = n_in.pop()
    target_N = source_N if N_max is None else N_max
    M = padded_size(max(source_N, target_N), padding)
    if real is None:
        real = all(f.is_real() for f in fields)

    values = [to_grid(f.coeffs, M) for f in fields]
    if real:
        values = [v.real for v in values]
    if pass_grid:
        result = fn(*values, x=grid(M))
    else:
        result = fn(*values)
    result = np.asarray(result)
    if result.ndim == 1:
        result = result[None, :]
    coeffs = from_grid(result, target_N)
    if real:
        # symmetrize away round-off so realness is exact
        coeffs = 0.5 * (coeffs + np.conj(coeffs[:, ::-1]))
    return FourierField(coeffs)


# ---- serialization ---------------------------------------------------------

def to_csv_rows(field: FourierField) -> list:
    rows = []
    for comp in range(field.n_components):
        for n, c in zip(field.wavenumbers, field.coeffs[comp]):
            rows.append((int(n), comp, float(c.real), float(c.imag)))
    return rows


def from_csv_rows(rows: Sequence) -> FourierField:
    rows = [(int(n), int(comp), float(re), float(im)) for n, comp, re, im in rows]
    N_max = max(abs(r[0]) for r in rows)
    m = max(r[1] for r in rows) + 1
    data = np.zeros((m, 2 * N_max + 1), dtype=complex)
    for n, comp, re, im in rows:
        data[comp, n + N_max] = complex(re, im)
    return FourierField(data)


def to_csv(field: FourierField) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(['n', 'component', 're', 'im'])
    for n, comp, re, im in to_csv_rows(field):
        writer.writerow([n, comp, format(re, '.17g'), format(im, '.17g')])
    return buffer.getvalue()


def from_csv(text: str) -> FourierField:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if [h.strip() for h in header] != ['n', 'component', 're', 'im']:
        raise ValueError(f"unexpected field CSV header {header}")
    return from_csv_rows([row for row in reader if row])


def to_bytes(field: FourierField) -> bytes:
    """Little-endian blob: int32 N_max, int32 n_components, then interleaved re/im doubles"""
    header = _HEADER.pack(field.N_max, field.n_components)
    return header + np.ascontiguousarray(field.coeffs, dtype='<c16').tobytes()


def from_bytes(blob: bytes) -> FourierField:
    N_max, m = _HEADER.unpack_from(blob)
    payload = np.frombuffer(blob, dtype='<c16', offset=_HEADER.size)
    expected = m * (2 * N_max + 1)
    if payload.size != expected:
        raise ValueError(f"blob holds {payload.size} coefficients, header promises {expected}")
    return FourierField(payload.reshape(m, 2 * N_max + 1))


if __name__ == "__main__":
    u = FourierField.from_function(np.cos, 8)
    sq = pointwise_apply(u, fn=lambda v: v**2)
    print(f"✅ cos² modes: {np.round(sq.coeffs[0, 8 - 2:8 + 3].real, 12)}")
    print(f"✅ ‖sin x‖_L2 = {sobolev_norm(FourierField.from_function(np.sin, 4), 0):.12f} (√π = {np.sqrt(np.pi):.12f})")
