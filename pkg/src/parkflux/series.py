"""Exact truncated power series over the rationals.

A :class:`Series` is a dense list of ``Fraction`` coefficients together with
a truncation order: all arithmetic is exact below the truncation order and
silently discards everything at or above it.  This is deliberately simple —
the orders used throughout the package are small (a few hundred at most),
and for the really heavy coefficient computations the solver module uses a
packed-integer fast path instead of this class.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Sequence, Union

Scalar = Union[int, Fraction]


class Series:
    """Truncated power series with exact rational coefficients.

    ``order`` is the truncation order: coefficients of x^n for n < order are
    stored (and exact); x^order and beyond are unknown.
    """

    __slots__ = ("coeffs", "order")

    def __init__(self, coeffs: Iterable[Scalar], order: int):
        cs = [Fraction(c) for c in coeffs]
        if len(cs) > order:
            cs = cs[:order]
        cs.extend([Fraction(0)] * (order - len(cs)))
        self.coeffs = cs
        self.order = order

    @classmethod
    def zero(cls, order: int) -> "Series":
        return cls([], order)

    @classmethod
    def constant(cls, value: Scalar, order: int) -> "Series":
        return cls([value], order)

    @classmethod
    def x(cls, order: int) -> "Series":
        return cls([0, 1], order)

    def __getitem__(self, n: int) -> Fraction:
        if not 0 <= n < self.order:
            raise IndexError(f"coefficient {n} outside truncation order {self.order}")
        return self.coeffs[n]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Series):
            return NotImplemented
        n = min(self.order, other.order)
        return self.coeffs[:n] == other.coeffs[:n] and self.order == other.order

    def __hash__(self):
        return hash((tuple(self.coeffs), self.order))

    def _coerce(self, other) -> "Series":
        if isinstance(other, Series):
            return other
        if isinstance(other, (int, Fraction)):
            return Series.constant(other, self.order)
        raise TypeError(f"cannot combine Series with {type(other)!r}")

    def __add__(self, other) -> "Series":
        o = self._coerce(other)
        n = min(self.order, o.order)
        return Series([self.coeffs[i] + o.coeffs[i] for i in range(n)], n)

    __radd__ = __add__

    def __neg__(self) -> "Series":
        return Series([-c for c in self.coeffs], self.order)

    def __sub__(self, other) -> "Series":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Series":
        return self._coerce(other) + (-self)

    def __mul__(self, other) -> "Series":
        if isinstance(other, (int, Fraction)):
            return Series([c * other for c in self.coeffs], self.order)
        o = self._coerce(other)
        n = min(self.order, o.order)
        # Cauchy product, truncated.  Skip zero coefficients: the series
        # handled here are often sparse at low orders.
        out = [Fraction(0)] * n
        for i, a in enumerate(self.coeffs[:n]):
            if not a:
                continue
            for j, b in enumerate(o.coeffs[: n - i]):
                if b:
                    out[i + j] += a * b
        return Series(out, n)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Series":
        if k < 0:
            raise ValueError("negative powers are not supported")
        out = Series.constant(1, self.order)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base if k > 1 else base
            k >>= 1
        return out

    def shift(self, k: int) -> "Series":
        """Multiply by x^k (k >= 0), keeping the truncation order."""
        if k < 0:
            raise ValueError("negative shift")
        return Series([Fraction(0)] * k + self.coeffs, self.order)

    def truncate(self, order: int) -> "Series":
        return Series(self.coeffs, min(order, self.order))

    def evaluate(self, x: Scalar) -> Fraction:
        """Horner evaluation of the truncated polynomial."""
        x = Fraction(x)
        acc = Fraction(0)
        for c in reversed(self.coeffs):
            acc = acc * x + c
        return acc

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coeffs)

    def __repr__(self):
        head = ", ".join(str(c) for c in self.coeffs[:6])
        tail = ", ..." if self.order > 6 else ""
        return f"Series([{head}{tail}]; order={self.order})"


class SeriesTable:
    """A family of series indexed by flux p = 0, 1, 2, ...

    Out-of-range indices read as zero series — convenient because a table
    computed to x-order N is automatically zero beyond flux K*N.
    """

    def __init__(self, series: Sequence[Series], order: int):
        self.order = order
        self._series = list(series)

    def __getitem__(self, p: int) -> Series:
        if p < 0:
            raise IndexError("flux index must be nonnegative")
        if p >= len(self._series):
            return Series.zero(self.order)
        return self._series[p]

    def __len__(self) -> int:
        return len(self._series)

    def delta(self, i: int) -> "SeriesTable":
        """Flux-index shift: entry p of the result is entry p + i of self.

        This realises the catalytic divided difference: dividing out y^i
        after removing the first i coefficients in y is, in the coefficient
        basis, just an index shift.
        """
        if i < 0:
            raise ValueError("shift must be nonnegative")
        return SeriesTable(self._series[i:], self.order)

    def row(self, n: int) -> list:
        """Coefficients [x^n] across all stored fluxes."""
        return [s[n] for s in self._series]
