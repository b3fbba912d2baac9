"""Tests for the catalog of scalar nonlinearities"""

import numpy as np
import pytest

from alarms import ConfigError
from nonlinearities import available, get_nonlinearity


class TestCatalog:
    def test_names(self):
        assert {'linear-heat', 'sine-advection', 'tanh-cubic', 'anti-damped-burgers'} <= set(available())

    def test_unknown_system(self):
        with pytest.raises(ConfigError, match="unknown system 'kdv'"):
            get_nonlinearity('kdv')

    @pytest.mark.parametrize("name", ['burgers-cut', 'sine-advection', 'tanh-cubic', 'forced-tanh'])
    def test_compact_support(self, name):
        entry = get_nonlinearity(name)
        u = np.linspace(2.0, 4.0, 9) * entry.support_radius
        x = np.zeros_like(u)
        np.testing.assert_array_equal(entry.f(u, x), 0.0)
        np.testing.assert_array_equal(entry.g(u, x), 0.0)

    @pytest.mark.parametrize("name", ['burgers-cut', 'sine-advection', 'tanh-cubic'])
    def test_exact_derivatives(self, name):
        entry = get_nonlinearity(name)
        u = np.linspace(-1.5, 1.5, 13) * entry.support_radius
        x = np.zeros_like(u)
        h = 1e-6
        np.testing.assert_allclose(entry.df(u, x), (entry.f(u + h, x) - entry.f(u - h, x)) / (2 * h),
                                   rtol=1e-5, atol=1e-6)
        np.testing.assert_allclose(entry.dg(u, x), (entry.g(u + h, x) - entry.g(u - h, x)) / (2 * h),
                                   rtol=1e-5, atol=1e-5)

    def test_forcing_parameter(self):
        entry = get_nonlinearity('forced-tanh', forcing=1.0)
        assert entry.g(np.array([0.0]), np.array([0.0]))[0] == pytest.approx(-1.0)

    def test_heat_without_damping(self):
        assert not get_nonlinearity('heat-no-damping').include_linear_u
