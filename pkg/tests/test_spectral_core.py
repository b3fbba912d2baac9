"""Tests for the Fourier substrate"""

import numpy as np
import pytest

from alarms import TruncationError
from spectral_core import (
    EigenTable,
    FourierField,
    derivative,
    from_bytes,
    from_csv,
    grid,
    inner_product,
    mean_value,
    padded_size,
    pointwise_apply,
    project_PK,
    reflect,
    sobolev_norm,
    to_bytes,
    to_csv,
)


class TestFourierField:
    """Construction, shape and arithmetic"""

    def test_cos_modes(self, cos_field):
        assert cos_field.mode(1) == pytest.approx(0.5)
        assert cos_field.mode(-1) == pytest.approx(0.5)
        assert cos_field.mode(0) == pytest.approx(0.0, abs=1e-14)
        assert cos_field.mode(20) == 0j

    def test_immutable(self, cos_field):
        with pytest.raises(ValueError):
            cos_field.coeffs[0, 0] = 1.0

    def test_bad_shape(self):
        with pytest.raises(ValueError, match="shape"):
            FourierField(np.zeros((1, 4)))

    def test_from_modes_out_of_range(self):
        with pytest.raises(TruncationError, match="outside N_max"):
            FourierField.from_modes({5: 1.0}, 4)

    def test_from_modes_with_component(self):
        f = FourierField.from_modes({(1, 1): 2.0}, 3, n_components=2)
        assert f.mode(1, component=1) == 2.0
        assert f.mode(1, component=0) == 0.0

    def test_mismatched_add(self):
        with pytest.raises(ValueError, match="shapes differ"):
            FourierField.zeros(2) + FourierField.zeros(3)

    def test_physical_round_trip(self, cos_field):
        M = padded_size(8)
        np.testing.assert_allclose(cos_field.physical(M), np.cos(grid(M)), atol=1e-13)

    def test_resized(self, cos_field):
        small = cos_field.resized(2)
        assert small.N_max == 2
        assert small.mode(1) == pytest.approx(0.5)
        assert cos_field.resized(12).mode(1) == pytest.approx(0.5)

    def test_is_real(self, cos_field):
        assert cos_field.is_real()
        assert not FourierField.from_modes({1: 1.0}, 2).is_real()


class TestOperators:
    def test_sine_l2_norm(self):
        sine = FourierField.from_function(np.sin, 4)
        assert sobolev_norm(sine, 0) == pytest.approx(np.sqrt(np.pi))
        assert sobolev_norm(sine, 1) == pytest.approx(np.sqrt(2 * np.pi))

    def test_derivative_of_cos(self, cos_field):
        np.testing.assert_allclose(derivative(cos_field).coeffs,
                                   FourierField.from_function(lambda x: -np.sin(x), 8).coeffs, atol=1e-13)

    def test_project_PK(self):
        f = FourierField.from_modes({1: 1.0, -1: 1.0, 3: 1.0, -3: 1.0}, 4)
        p = project_PK(f, 2)
        assert p.mode(3) == 0.0 and p.mode(1) == 1.0
        with pytest.raises(TruncationError):
            project_PK(f, 5)

    def test_inner_product_and_mean(self, cos_field):
        assert inner_product(cos_field, cos_field).real == pytest.approx(np.pi)
        shifted = cos_field + FourierField.from_modes({0: 2.0}, 8)
        assert mean_value(shifted) == pytest.approx(2.0)

    def test_reflect_sine(self):
        sine = FourierField.from_function(np.sin, 4)
        np.testing.assert_allclose(reflect(sine).coeffs, -sine.coeffs, atol=1e-14)

    def test_pointwise_square(self, cos_field):
        square = pointwise_apply(cos_field, fn=lambda v: v**2)
        assert square.mode(0) == pytest.approx(0.5)
        assert square.mode(2) == pytest.approx(0.25)

    def test_eigen_table(self):
        np.testing.assert_array_equal(EigenTable.table(5), [1, 2, 2, 5, 5])
        assert EigenTable.lambda_minus(3) == 10.0
        assert EigenTable.lambda_plus(3) == 17.0


class TestSerialization:
    def test_csv(self, cos_field):
        text = to_csv(cos_field)
        assert text.splitlines()[0] == 'n,component,re,im'
        np.testing.assert_array_equal(from_csv(text).coeffs, cos_field.coeffs)

    def test_bytes(self):
        f = FourierField.from_modes({(1, 0): 1 + 2j, (-2, 1): 0.5}, 3, n_components=2)
        back = from_bytes(to_bytes(f))
        np.testing.assert_array_equal(back.coeffs, f.coeffs)

    def test_truncated_blob(self, cos_field):
        with pytest.raises(ValueError, match="header promises"):
            from_bytes(to_bytes(cos_field)[:-16])
