"""
Catalog of named scalar RDA nonlinearities

Every entry is compactly supported in u through the radial cut-off χ(u²/R²_sup) unless it is a
deliberate divergent control. Derivatives are exact (d/du of the cut-off product).
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from alarms import ConfigError
from cutoffs import support_cutoff

logger = logging.getLogger(__name__)

_chi = support_cutoff()


def _cut(radius: float, fn: Callable, dfn: Callable):
    """Return (u ↦ fn(u)·χ(u²/R²), its u-derivative)"""
    def value(u, x=None):
        return fn(u, x) * _chi(u * u / radius**2)

    def deriv(u, x=None):
        s = u * u / radius**2
        return dfn(u, x) * _chi(s) + fn(u, x) * _chi.derivative(s) * 2.0 * u / radius**2

    return value, deriv


def _zero(u, x=None):
    return np.zeros_like(u)


@dataclass(frozen=True)
class Nonlinearity:
    name: str
    description: str
    f: Callable
    df: Callable
    g: Callable
    dg: Callable
    include_linear_u: bool = True
    support_radius: Optional[float] = None


def _catalog(forcing: float = 0.5) -> dict:
    burgers_f, burgers_df = _cut(10.0, lambda u, x: u, lambda u, x: np.ones_like(u))
    sine_f, sine_df = _cut(4.0, lambda u, x: np.sin(u), lambda u, x: np.cos(u))
    tanh_f, tanh_df = _cut(3.0, lambda u, x: np.tanh(u), lambda u, x: 1.0 / np.cosh(u) ** 2)
    cubic_g, cubic_dg = _cut(3.0, lambda u, x: u**3, lambda u, x: 3.0 * u**2)
    forced_g, forced_dg = _cut(
        3.0,
        lambda u, x: u**3 - forcing * np.cos(x),
        lambda u, x: 3.0 * u**2,
    )

    entries = [
        Nonlinearity("linear-heat", "f = g = 0 with the +u damping", _zero, _zero, _zero, _zero),
        Nonlinearity("heat-no-damping", "f = g = 0 without the +u term", _zero, _zero, _zero, _zero,
                     include_linear_u=False),
        Nonlinearity("burgers-cut", "f = u·χ(u²/100)", burgers_f, burgers_df, _zero, _zero,
                     support_radius=10.0),
        Nonlinearity("sine-advection", "f = sin(u)·χ(u²/16)", sine_f, sine_df, _zero, _zero,
                     support_radius=4.0),
        Nonlinearity("tanh-cubic", "f = tanh(u)·χ, g = u³·χ (R_sup = 3)", tanh_f, tanh_df, cubic_g, cubic_dg,
                     support_radius=3.0),
        Nonlinearity("forced-tanh", f"f = tanh(u)·χ, g = (u³ − {forcing}·cos x)·χ", tanh_f, tanh_df,
                     forced_g, forced_dg, support_radius=3.0),
        Nonlinearity("anti-damped-burgers", "f = u, g = −3u, no cut-off (divergent control)",
                     lambda u, x=None: u, lambda u, x=None: np.ones_like(u),
                     lambda u, x=None: -3.0 * u, lambda u, x=None: -3.0 * np.ones_like(u)),
    ]
    return {entry.name: entry for entry in entries}


CATALOG = _catalog()


def available() -> list:
    return sorted(CATALOG)


def get_nonlinearity(name: str, forcing: Optional[float] = None) -> Nonlinearity:
    catalog = CATALOG if forcing is None else _catalog(forcing)
    if name not in catalog:
        raise ConfigError(f"unknown system '{name}' (available: {', '.join(available())})")
    return catalog[name]
