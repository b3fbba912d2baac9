"""
Smooth cut-off profiles built from the e^{-1/z} gluing

S(z) = h(z) / (h(z) + h(1-z)),  h(z) = exp(-1/z) for z > 0, 0 otherwise.
S is C^infinity, S = 0 for z <= 0, S = 1 for z >= 1 and S is monotone in between.
"""

from dataclasses import dataclass

import numpy as np


def _h(z):
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    positive = z > 0
    out[positive] = np.exp(-1.0 / z[positive])
    return out


def _dh(z):
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    positive = z > 0
    zp = z[positive]
    out[positive] = np.exp(-1.0 / zp) / zp**2
    return out


def smoothstep(z):
    """C^infinity step from 0 (z <= 0) to 1 (z >= 1)"""
    z = np.clip(np.asarray(z, dtype=float), -1.0, 2.0)
    a = _h(z)
    b = _h(1.0 - z)
    return a / (a + b)


def smoothstep_derivative(z):
    z = np.clip(np.asarray(z, dtype=float), -1.0, 2.0)
    a, b = _h(z), _h(1.0 - z)
    da, db = _dh(z), _dh(1.0 - z)
    # d/dz a/(a+b) with d(1-z)/dz = -1
    return (da * b + a * db) / (a + b) ** 2


@dataclass(frozen=True)
class SmoothCutoff:
    """Equals low_value for x <= lo, high_value for x >= hi, monotone in between"""

    lo: float
    hi: float
    low_value: float = 1.0
    high_value: float = 0.0

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError(f"cut-off needs hi > lo, got lo={self.lo}, hi={self.hi}")

    def __call__(self, x):
        s = smoothstep((np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo))
        value = self.low_value + (self.high_value - self.low_value) * s
        return float(value) if np.ndim(value) == 0 else value

    def derivative(self, x):
        width = self.hi - self.lo
        ds = smoothstep_derivative((np.asarray(x, dtype=float) - self.lo) / width) / width
        value = (self.high_value - self.low_value) * ds
        return float(value) if np.ndim(value) == 0 else value


def theta_cutoff(lo: float, hi: float) -> SmoothCutoff:
    """Ball cut-off in ||w||^2_{H^1}: 1 inside, 0 outside"""
    return SmoothCutoff(lo, hi, 1.0, 0.0)


def phi_cutoff(R: float) -> SmoothCutoff:
    """Spatial-averaging profile: 0 below R^2, -1/2 above 4R^2, decreasing"""
    return SmoothCutoff(R**2, 4.0 * R**2, 0.0, -0.5)


def theta1(sharpness: float = 1.0) -> SmoothCutoff:
    """0 for y <= 1/4, 1 for y >= 1/2; sharpness > 1 narrows the ramp toward its midpoint"""
    half = 0.125 / sharpness
    return SmoothCutoff(0.375 - half, 0.375 + half, 0.0, 1.0)


def theta2() -> SmoothCutoff:
    """0 for y <= 0, 1 for y >= 1/4"""
    return SmoothCutoff(0.0, 0.25, 0.0, 1.0)


def embedding_phi() -> SmoothCutoff:
    """Gluing profile in |u|^2: 1 for |u|^2 <= 1/4, 0 for |u|^2 >= 1/2"""
    return SmoothCutoff(0.25, 0.5, 1.0, 0.0)


def support_cutoff() -> SmoothCutoff:
    """Compact-support profile chi(|u|^2 / R_sup^2): 1 up to 1, 0 from 2"""
    return SmoothCutoff(1.0, 2.0, 1.0, 0.0)
