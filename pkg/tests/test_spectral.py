import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from immersion import spectral
from immersion.errors import UnsupportedChartError
from immersion.spectral import ParamDomain


@pytest.mark.parametrize("n1,n2", [(3, 8), (8, 5), (2, 2), (6, 0)])
def test_domain_rejects_odd_or_small(n1, n2):
    with pytest.raises(ValueError):
        ParamDomain(n1, n2)


def test_domain_rejects_nonpositive_length():
    with pytest.raises(ValueError):
        ParamDomain(8, 8, L1=0.0)


def test_constant_has_zero_derivatives():
    d = ParamDomain(8, 8)
    f = np.full(d.shape, 3.0 + 1j)
    df, dbf = spectral.complex_derivatives(f, d)
    assert np.max(np.abs(df)) < 1e-14 and np.max(np.abs(dbf)) < 1e-14


def test_exponential_in_q1():
    d = ParamDomain(8, 8)
    q1, _ = d.grid()
    f = np.exp(1j * q1)
    df, dbf = spectral.complex_derivatives(f, d)
    assert np.allclose(df, 0.5j * f, atol=1e-13)
    assert np.allclose(dbf, 0.5j * f, atol=1e-13)


def test_exponential_in_q2():
    d = ParamDomain(8, 8)
    _, q2 = d.grid()
    f = np.exp(1j * q2)
    df, dbf = spectral.complex_derivatives(f, d)
    assert np.allclose(df, 0.5 * f, atol=1e-13)
    assert np.allclose(dbf, -0.5 * f, atol=1e-13)


def test_non_periodic_axis_is_refused():
    d = ParamDomain(8, 8, periodic=(False, True))
    with pytest.raises(UnsupportedChartError):
        spectral.complex_derivatives(np.zeros(d.shape), d)


def test_antiperiodic_derivative_of_half_integer_mode():
    n, L = 16, 2 * np.pi
    q = np.arange(n) * L / n
    f = np.exp(1.5j * q)
    df = spectral.spectral_derivative(f, 0, L, "antiperiodic")
    assert np.allclose(df, 1.5j * f, atol=1e-12)


def test_derivative_blocks_are_adjoint_pair():
    d = ParamDomain(6, 8, L1=3.0, L2=5.0)
    D, Db = spectral.derivative_matrices(d)
    assert np.allclose(D.conj().T, -Db, atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(m1=st.integers(-3, 3), m2=st.integers(-3, 3),
       L1=st.floats(0.5, 10.0), L2=st.floats(0.5, 10.0))
def test_band_limited_modes_are_differentiated_exactly(m1, m2, L1, L2):
    d = ParamDomain(8, 8, L1, L2)
    q1, q2 = d.grid()
    k1, k2 = 2 * np.pi * m1 / L1, 2 * np.pi * m2 / L2
    f = np.exp(1j * (k1 * q1 + k2 * q2))
    df, dbf = spectral.complex_derivatives(f, d)
    assert np.allclose(df, 0.5j * (k1 - 1j * k2) * f, atol=1e-11 * (1 + abs(k1) + abs(k2)))
    assert np.allclose(dbf, 0.5j * (k1 + 1j * k2) * f, atol=1e-11 * (1 + abs(k1) + abs(k2)))


def test_trapezoid_weights_integrate_area():
    d = ParamDomain(6, 10, 2.0, 3.0)
    assert np.isclose(d.weights().sum(), 6.0)
