import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special

from ntmtest.errors import DomainError
from ntmtest.specfun import (
    chi2_sf,
    chi2_sf_array,
    chi2_sf_inv,
    reg_lower_gamma,
    reg_upper_gamma,
)


def poisson_tail(N, x):
    h = x / 2
    return math.exp(-h) * math.fsum(h ** j / math.factorial(j) for j in range(N // 2))


def test_lower_gamma_closed_forms():
    assert reg_lower_gamma(3.7, 0.0) == 0.0
    assert reg_lower_gamma(1, 1) == pytest.approx(1 - math.exp(-1), abs=1e-15)
    assert reg_lower_gamma(4, 4) == pytest.approx(1 - math.exp(-4) * (1 + 4 + 8 + 32 / 3), abs=1e-14)
    assert round(reg_lower_gamma(4, 4), 7) == 0.5665299


@pytest.mark.parametrize("a", [0.05, 0.5, 1, 2.5, 4, 10, 75, 400])
@pytest.mark.parametrize("x", [1e-8, 0.3, 1, 3.9, 5, 11, 80, 420, 2000])
def test_gamma_against_scipy(a, x):
    assert reg_lower_gamma(a, x) == pytest.approx(special.gammainc(a, x), abs=1e-13)
    assert reg_upper_gamma(a, x) == pytest.approx(special.gammaincc(a, x), abs=1e-13)
    assert abs(reg_lower_gamma(a, x) + reg_upper_gamma(a, x) - 1) <= 1e-13


def test_gamma_domain():
    with pytest.raises(DomainError):
        reg_lower_gamma(0, 1)
    with pytest.raises(DomainError):
        reg_lower_gamma(1, -1)


def test_chi2_sf_examples():
    assert chi2_sf(8, 0) == 1.0
    assert chi2_sf(8, 8.0) == pytest.approx(0.4334701, abs=5e-8)
    assert chi2_sf(2, 2 * math.log(2)) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(DomainError):
        chi2_sf(8, -1)


@pytest.mark.parametrize("N", [2, 4, 8, 16])
@pytest.mark.parametrize("x", [0.01, 1, 5.5, 8, 20, 60, 200])
def test_chi2_sf_matches_poisson_sum(N, x):
    assert abs(chi2_sf(N, x) - poisson_tail(N, x)) <= 1e-12


def test_chi2_sf_array_matches_scalar():
    x = np.array([0, 0.5, 8, 20.09, 100, 2019.9, 1e6])
    for N in (1, 2, 3, 8):
        expected = [chi2_sf(N, v) for v in x]
        assert np.allclose(chi2_sf_array(N, x), expected, rtol=1e-12, atol=1e-15)


def test_chi2_sf_inv_examples():
    assert chi2_sf_inv(8, 1.0) == 0.0
    assert chi2_sf_inv(8, 0.4334701) == pytest.approx(8.0, abs=1e-5)
    assert chi2_sf_inv(2, 0.5) == pytest.approx(2 * math.log(2), rel=1e-12)
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(DomainError):
            chi2_sf_inv(8, bad)


@pytest.mark.parametrize("N", [2, 4, 8, 16])
@pytest.mark.parametrize("p", [1e-6, 1e-4, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 0.999])
def test_chi2_round_trip(N, p):
    x = chi2_sf_inv(N, p)
    assert abs(chi2_sf(N, x) - p) <= 1e-9
    from scipy.stats import chi2

    assert x == pytest.approx(chi2.isf(p, N), rel=1e-10)


@given(st.floats(0, 300), st.floats(0.001, 50))
def test_chi2_sf_decreasing(x, dx):
    assert chi2_sf(8, x + dx) <= chi2_sf(8, x)


@given(st.floats(1e-12, 0.999), st.floats(1.0001, 2))
def test_chi2_sf_inv_decreasing(p, f):
    q = min(1.0, p * f)
    if q > p:
        assert chi2_sf_inv(8, q) < chi2_sf_inv(8, p)
