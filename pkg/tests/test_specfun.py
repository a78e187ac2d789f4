"""Unit and property tests for the gamma-family kernels."""

from __future__ import annotations

import math

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from kcut import specfun


def test_gamma_matches_math() -> None:
    for a in [0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 7.5, 20.0]:
        assert specfun.gamma(a) == math.gamma(a)


def test_gamma_rejects_nonpositive() -> None:
    with pytest.raises(ValueError):
        specfun.gamma(0.0)
    with pytest.raises(ValueError):
        specfun.gamma(-1.5)


def test_q_boundary_values() -> None:
    assert specfun.q(2.5, 0.0) == 1.0
    assert specfun.q(1.0, 800.0) == pytest.approx(0.0, abs=1e-300)
    with pytest.raises(ValueError):
        specfun.q(0.0, 1.0)
    with pytest.raises(ValueError):
        specfun.q(1.0, -0.5)


def test_q_exponential_closed_form() -> None:
    """Q(1, x) = exp(-x) must hold through the generic series/CF paths."""
    for i in range(301):
        x = 30.0 * i / 300.0
        ref = math.exp(-x)
        assert specfun.q(1.0, x) == pytest.approx(ref, rel=1e-12)


def test_upper_gamma_closed_form_a2() -> None:
    """Gamma(2, x) = (x + 1) exp(-x)."""
    for i in range(121):
        x = 30.0 * i / 120.0
        ref = (x + 1.0) * math.exp(-x)
        assert specfun.upper_gamma(2.0, x) == pytest.approx(ref, rel=1e-12)


def test_shift_identity() -> None:
    """Gamma(a+1, x) = a * Gamma(a, x) + x**a * exp(-x)."""
    for a in [0.3, 0.5, 1.0, 1.7, 3.2, 9.0]:
        for x in [1e-3, 0.1, 0.5, 1.0, 2.5, 7.0, 20.0]:
            lhs = specfun.upper_gamma(a + 1.0, x)
            rhs = a * specfun.upper_gamma(a, x) + x**a * math.exp(-x)
            assert lhs == pytest.approx(rhs, rel=1e-13)


@given(
    a=st.floats(min_value=0.05, max_value=50.0),
    x=st.floats(min_value=0.0, max_value=150.0),
)
@settings(max_examples=300, deadline=None)
def test_q_matches_scipy(a: float, x: float) -> None:
    ref = float(special.gammaincc(a, x))
    ours = specfun.q(a, x)
    if ref > 1e-280:
        assert ours == pytest.approx(ref, rel=5e-13)
    else:
        assert ours == pytest.approx(ref, abs=1e-280)


def test_q_matches_mpmath_spot_checks() -> None:
    mpmath.mp.dps = 40
    for a, x in [(0.5, 0.25), (0.5, 7.0), (1.5, 1.5), (2.0, 40.0),
                 (0.1, 3.0), (10.0, 3.0), (10.0, 30.0)]:
        ref = float(mpmath.gammainc(a, x, mpmath.inf, regularized=True))
        assert specfun.q(a, x) == pytest.approx(ref, rel=1e-13)


@given(
    a=st.floats(min_value=0.05, max_value=40.0),
    x0=st.floats(min_value=1e-6, max_value=80.0),
    x1=st.floats(min_value=1e-6, max_value=80.0),
)
@settings(max_examples=200, deadline=None)
def test_q_monotone_decreasing(a: float, x0: float, x1: float) -> None:
    lo, hi = min(x0, x1), max(x0, x1)
    assert specfun.q(a, lo) >= specfun.q(a, hi) - 1e-14


def test_q_inv_extension_and_edges() -> None:
    assert specfun.q_inv(2.0, 1.0) == 0.0
    assert specfun.q_inv(2.0, 1.5) == 0.0
    assert specfun.q_inv(2.0, 0.0) == math.inf
    assert specfun.q_inv(2.0, -0.3) == math.inf
    with pytest.raises(ValueError):
        specfun.q_inv(-1.0, 0.5)


def test_q_inv_log_closed_form() -> None:
    """q_inv(1, y) = log(1/y)."""
    for y in [1e-12, 1e-6, 1e-3, 0.01, 0.1, 0.37, 0.5, 0.9, 0.999]:
        assert specfun.q_inv(1.0, y) == pytest.approx(-math.log(y), rel=1e-12)


@given(
    a=st.floats(min_value=0.05, max_value=40.0),
    y=st.floats(min_value=1e-18, max_value=1.0, exclude_max=True),
)
@settings(max_examples=300, deadline=None)
def test_q_inv_roundtrip(a: float, y: float) -> None:
    x = specfun.q_inv(a, y)
    assert x >= 0.0
    assert specfun.q(a, x) == pytest.approx(y, rel=1e-11)


@given(
    a=st.floats(min_value=0.05, max_value=40.0),
    x=st.floats(min_value=1e-8, max_value=60.0),
)
@settings(max_examples=200, deadline=None)
def test_q_inv_roundtrip_other_direction(a: float, x: float) -> None:
    y = specfun.q(a, x)
    if 1e-280 < y < 1.0:
        xr = specfun.q_inv(a, y)
        # x is only determined up to the rounding of y divided by the
        # local slope |dQ/dx| = x**(a-1) exp(-x) / gamma(a).
        slope = math.exp((a - 1.0) * math.log(x) - x - math.lgamma(a))
        cond = 4.0 * 2.2e-16 * y / slope
        assert abs(xr - x) <= 1e-10 * x + cond


def test_q_sandwich_bounds_for_small_shape() -> None:
    """For 0 < a <= 1:
    1 - (1 - exp(-c*x))**a <= Q(a, x) <= 1 - (1 - exp(-x))**a
    with c = gamma(1 + a)**(-1/a).
    """
    for a in [0.2, 1.0 / 3.0, 0.5, 2.0 / 3.0, 0.9, 1.0]:
        c = math.gamma(1.0 + a) ** (-1.0 / a)
        for x in [1e-4, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 12.0]:
            val = specfun.q(a, x)
            upper = 1.0 - (1.0 - math.exp(-x)) ** a
            lower = 1.0 - (1.0 - math.exp(-c * x)) ** a
            assert lower - 1e-13 <= val <= upper + 1e-13


def test_q_inv_derivative_formula() -> None:
    """d q_inv / dy = -gamma(a) * exp(theta) * theta**(1 - a) at theta."""
    for a in [0.4, 1.0, 1.6, 3.0]:
        for y in [0.05, 0.2, 0.5, 0.8]:
            h = 1e-7
            num = (specfun.q_inv(a, y + h) - specfun.q_inv(a, y - h)) / (2 * h)
            theta = specfun.q_inv(a, y)
            ana = -specfun.gamma(a) * math.exp(theta) * theta ** (1.0 - a)
            assert num == pytest.approx(ana, rel=5e-6)
