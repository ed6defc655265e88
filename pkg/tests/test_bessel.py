import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from dtnlab.bessel import KAPPA1, bessel_dtn, bessel_j, bessel_j_prime, bessel_zero, first_dirichlet_eigenvalue


def test_known_values():
    assert bessel_j(0, 0.0) == 1.0
    assert bessel_j(3, 0.0) == 0.0
    assert bessel_j(0, 1.0) == pytest.approx(0.7651976865579666, abs=1e-15)
    assert bessel_j(1, 1.0) == pytest.approx(0.4400505857449335, abs=1e-15)


@given(st.integers(0, 30), st.floats(0.0, 12.0))
def test_series_matches_scipy(m, z):
    ref = special.jv(m, z)
    assert abs(bessel_j(m, z) - ref) <= 1e-12 * max(1.0, abs(ref))


@given(st.integers(-8, 8), st.floats(0.0, 10.0))
def test_negative_order_reflection(m, z):
    assert bessel_j(-abs(m), z) == pytest.approx((-1) ** abs(m) * bessel_j(abs(m), z), abs=1e-14)


@given(st.integers(0, 10), st.floats(0.1, 10.0))
def test_derivative_recurrence(m, z):
    assert bessel_j_prime(m, z) == pytest.approx(special.jvp(m, z), abs=1e-12)


def test_dtn_limits():
    # c -> 0: the harmonic extension r^m gives m
    for m in range(6):
        assert bessel_dtn(m, 1e-14).real == pytest.approx(m, abs=1e-10)
    # c = 1, m = 0: -J1(1) / J0(1)
    assert bessel_dtn(0, 1.0) == pytest.approx(-0.4400505857449335 / 0.7651976865579666, rel=1e-13)


def test_dtn_complex_argument():
    c = 1.0 + 1.0j
    k = np.sqrt(c)
    ref = k * special.jvp(2, k) / special.jv(2, k)
    assert abs(bessel_dtn(2, c) - ref) < 1e-12 * abs(ref)


def test_first_zero_and_kappa1():
    assert bessel_zero(0, 2.4) == pytest.approx(2.404825557695773, abs=1e-13)
    assert bessel_zero(1, 3.8) == pytest.approx(3.831705970207512, abs=1e-13)
    assert math.sqrt(first_dirichlet_eigenvalue()) == pytest.approx(2.404825558, abs=1e-8)
    assert KAPPA1 == pytest.approx(5.783185962946784, rel=1e-13)
