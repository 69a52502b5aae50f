"""Truncated power-series arithmetic."""

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parkflux.series import Series

coeff = st.fractions(
    min_value=-10, max_value=10, max_denominator=6
)
series_st = st.lists(coeff, min_size=1, max_size=6).map(
    lambda cs: Series(cs, order=8)
)


def test_constructors():
    assert Series.zero(5)[3] == 0
    assert Series.constant(Fraction(7), 5)[0] == 7
    x = Series.x(5)
    assert x[1] == 1 and x[0] == 0 and x[2] == 0


def test_mul_truncates():
    x = Series.x(3)
    assert (x * x * x * x)[0] == 0  # order-3 truncation: x^4 == 0
    assert (x * x * x * x) == Series.zero(3)


def test_shift_is_multiplication_by_x():
    s = Series([Fraction(1), Fraction(2)], order=5)
    assert s.shift(1) == Series.x(5) * s


def test_evaluate_matches_horner():
    s = Series([Fraction(1), Fraction(2), Fraction(3)], order=5)
    assert s.evaluate(Fraction(1, 2)) == 1 + 2 * Fraction(1, 2) + 3 * Fraction(1, 4)


@settings(max_examples=60, deadline=None)
@given(series_st, series_st, series_st)
def test_ring_axioms(a, b, c):
    assert a + b == b + a
    assert a * b == b * a
    assert (a + b) * c == a * c + b * c
    assert (a * b) * c == a * (b * c)


@settings(max_examples=40, deadline=None)
@given(series_st, st.integers(min_value=0, max_value=4))
def test_pow_is_repeated_mul(a, k):
    expected = Series.constant(Fraction(1), a.order)
    for _ in range(k):
        expected = expected * a
    assert a**k == expected


@settings(max_examples=40, deadline=None)
@given(series_st, st.integers(min_value=0, max_value=3))
def test_shift_shifts_coefficients(a, k):
    shifted = a.shift(k)
    for n in range(a.order):
        if n < k:
            assert shifted[n] == 0
        else:
            assert shifted[n] == a[n - k]
