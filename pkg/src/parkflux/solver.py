"""Partition function solvers.

Two computations live here:

* ``compute_coefficients`` — exact rational coefficients [x^n][y^p] F up to
  a given order, straight from the catalytic equation F = x Q(y, F, D1 F,
  ..., DK F).  The x-factor makes coefficient n depend only on coefficients
  below n, so this is a clean dynamic program.  For large orders the hot
  loop packs each y-polynomial into a single big integer (one slot of fixed
  width per flux), so a Cauchy-product step is a single GMP multiply; slot
  width is certified in advance with an exact scalar majorant series, so no
  overflow between slots is possible.

* ``evaluate`` — the flux-truncated system at a fixed x, solved to a target
  binary precision.  Strategy: monotone (Kleene) iteration in a tilted
  variable V_p = y0^p W_p to keep float64 happy, Newton/chord polish with a
  Toeplitz-structured Jacobian, then mixed-precision iterative refinement
  (exact fixed-point integer convolutions for residuals, the frozen float64
  LU for corrections) down to ~2^-precision residuals.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Dict, List, Optional, Sequence, Tuple

import gmpy2
import numpy as np
from gmpy2 import mpfr, mpz
from scipy.linalg import lu_factor, lu_solve, toeplitz
from scipy.signal import fftconvolve

from .model import WeightFunction
from .series import Series, SeriesTable

# ---------------------------------------------------------------------------
# Exact coefficient solver
# ---------------------------------------------------------------------------


@dataclass
class PartitionSolution:
    """Exact rational coefficients of the flux series, to x-order N.

    Coefficients are stored packed (one big integer per x-order, slot width
    ``slot_bits`` per flux, common denominator ``denom**n``); unpacking is
    lazy.  Pointed tables (vertex-marked and flux-K-marked) are attached by
    :func:`compute_pointed`.
    """

    wf: WeightFunction
    N: int
    slot_bits: int
    denom: int
    packed: List[int]  # packed[n] encodes [x^n][y^p] * denom^n
    pointed_vertex: Optional[List[Dict[int, Fraction]]] = None
    pointed_k: Optional[List[Dict[int, Fraction]]] = None

    @property
    def flux_max(self) -> int:
        return self.wf.K * self.N

    def coefficient(self, n: int, p: int) -> Fraction:
        if not 1 <= n <= self.N:
            raise IndexError(f"order {n} outside 1..{self.N}")
        if p < 0:
            raise IndexError("negative flux")
        if p > self.wf.K * n:
            return Fraction(0)
        raw = (self.packed[n] >> (self.slot_bits * p)) & ((1 << self.slot_bits) - 1)
        return Fraction(int(raw), self.denom**n)

    def row(self, n: int) -> List[Fraction]:
        """All flux coefficients of x^n."""
        width = self.slot_bits // 8
        nbytes = width * (self.wf.K * n + 1) + 8
        data = int(self.packed[n]).to_bytes(nbytes, "little")
        den = self.denom**n
        return [
            Fraction(int.from_bytes(data[p * width : (p + 1) * width], "little"), den)
            for p in range(self.wf.K * n + 1)
        ]

    def series(self, p: int, order: Optional[int] = None) -> Series:
        order = self.N + 1 if order is None else order
        coeffs = [Fraction(0)]
        for n in range(1, min(order, self.N + 1)):
            coeffs.append(self.coefficient(n, p) if p <= self.wf.K * n else Fraction(0))
        return Series(coeffs, min(order, self.N + 1))

    def table(self, order: Optional[int] = None) -> SeriesTable:
        order = self.N + 1 if order is None else order
        pmax = self.wf.K * (order - 1)
        return SeriesTable([self.series(p, order) for p in range(pmax + 1)], order)

    def w0_floats(self) -> np.ndarray:
        """[x^n] of the flux-zero series as floats, n = 1..N (for fits)."""
        return np.array([float(self.coefficient(n, 0)) for n in range(1, self.N + 1)])

    def w0_ratios(self) -> np.ndarray:
        """a_n / a_{n-1} for the flux-zero series, as floats (exact until
        the final rounding)."""
        out = []
        prev = None
        for n in range(1, self.N + 1):
            cur = self.coefficient(n, 0)
            if prev not in (None, 0) and cur:
                out.append(float(cur / prev))
            else:
                out.append(np.nan)
            prev = cur
        return np.array(out)


def _monomials(wf: WeightFunction) -> List[Tuple[int, Tuple[int, ...], Fraction]]:
    """(c, factor shift multiset, coefficient) for each monomial of Q."""
    poly = wf.to_polynomial()
    out = []
    for (c, multideg), coeff in sorted(poly.monomials.items()):
        if coeff:
            shifts = tuple(i for i, a in enumerate(multideg) for _ in range(a))
            out.append((c, shifts, coeff))
    return out


def compute_coefficients(
    wf: WeightFunction, N: int, engine: str = "auto"
) -> PartitionSolution:
    """Exact [x^n][y^p] F for n <= N (all fluxes, which are <= K*n)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if engine == "auto":
        engine = "packed"
    if engine == "plain":
        return _compute_plain(wf, N)
    if engine == "packed":
        return _compute_packed(wf, N)
    raise ValueError(f"unknown engine {engine!r}")


def _compute_plain(wf: WeightFunction, N: int) -> PartitionSolution:
    """Reference implementation with Fraction dicts (slow, transparent)."""
    monos = _monomials(wf)
    K = wf.K
    # F[n] = {p: Fraction}
    F: List[Dict[int, Fraction]] = [dict() for _ in range(N + 1)]
    # per-monomial cached chain of partial products (lists of dicts per order)
    chains: Dict[Tuple[int, ...], List[List[Dict[int, Fraction]]]] = {}
    shift_sets = sorted(set(shifts for _, shifts, _ in monos if shifts))
    for shifts in shift_sets:
        chains[shifts] = [[] for _ in range(len(shifts))]

    def poly_mul(a: Dict[int, Fraction], b: Dict[int, Fraction]) -> Dict[int, Fraction]:
        out: Dict[int, Fraction] = {}
        for pa, va in a.items():
            for pb, vb in b.items():
                out[pa + pb] = out.get(pa + pb, Fraction(0)) + va * vb
        return out

    def poly_add(acc: Dict[int, Fraction], other: Dict[int, Fraction], scale=Fraction(1)):
        for p, v in other.items():
            acc[p] = acc.get(p, Fraction(0)) + v * scale

    def factor_at(shift: int, m: int) -> Dict[int, Fraction]:
        return {p - shift: v for p, v in F[m].items() if p >= shift}

    for n in range(1, N + 1):
        m_order = n - 1
        # extend every chain to x-order m_order
        for shifts, levels in chains.items():
            for j in range(len(shifts)):
                coeff: Dict[int, Fraction] = {}
                if j == 0:
                    coeff = factor_at(shifts[0], m_order)
                else:
                    for m in range(m_order + 1):
                        prev = levels[j - 1][m]
                        fac = factor_at(shifts[j], m_order - m)
                        if prev and fac:
                            poly_add(coeff, poly_mul(prev, fac))
                levels[j].append(coeff)
        acc: Dict[int, Fraction] = {}
        for c, shifts, coeff in monos:
            if not shifts:
                if m_order == 0:
                    acc[c] = acc.get(c, Fraction(0)) + coeff
                continue
            top = chains[shifts][-1][m_order]
            poly_add(acc, {p + c: v for p, v in top.items()}, coeff)
        F[n] = {p: v for p, v in acc.items() if v}

    # re-encode as packed ints so both engines share one storage format
    dens = [w.denominator for w in wf.weights.values() if w] or [1]
    D = reduce(_lcm, dens, 1)
    maxval = 1
    for n in range(1, N + 1):
        for v in F[n].values():
            maxval = max(maxval, abs(int(v * D**n)))
    b = 8 * ((maxval.bit_length() + 8) // 8 + 1)
    packed = [0]
    for n in range(1, N + 1):
        val = 0
        den = D**n
        for p, v in F[n].items():
            val |= int(v * den) << (b * p)
        packed.append(val)
    return PartitionSolution(wf=wf, N=N, slot_bits=b, denom=D, packed=packed)


def _lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


def _compute_packed(wf: WeightFunction, N: int) -> PartitionSolution:
    """Fast path: y-polynomials as slot-packed big integers.

    Slot width is fixed from an exact scalar majorant run (the same
    recursion at y = 1 with every divided difference replaced by the full
    series), which dominates every packed slot and every intermediate
    chain product, so inter-slot carries cannot occur.
    """
    monos = _monomials(wf)
    K = wf.K
    dens = [w.denominator for w in wf.weights.values() if w] or [1]
    D = reduce(_lcm, dens, 1)
    imonos = [(c, shifts, int(coeff * D)) for c, shifts, coeff in monos]
    shift_sets = sorted(set(shifts for _, shifts, _ in imonos if shifts))

    # ---- pass 1: scalar majorant --------------------------------------
    T = [0] * (N + 1)  # majorant of sum_p coeff[n][p]
    chainT: Dict[Tuple[int, ...], List[List[int]]] = {
        s: [[] for _ in s] for s in shift_sets
    }
    maxval = 1
    for n in range(1, N + 1):
        m_order = n - 1
        for shifts, levels in chainT.items():
            for j in range(len(shifts)):
                if j == 0:
                    val = T[m_order]
                else:
                    val = sum(
                        levels[j - 1][m] * T[m_order - m] for m in range(m_order + 1)
                    )
                levels[j].append(val)
                if val > maxval:
                    maxval = val
        tot = 0
        for c, shifts, coeff in imonos:
            if not shifts:
                tot += coeff if m_order == 0 else 0
            else:
                tot += coeff * chainT[shifts][-1][m_order]
        T[n] = tot
        if tot > maxval:
            maxval = tot

    b = 8 * (maxval.bit_length() // 8 + 2)  # byte-aligned slot width + guard

    # ---- pass 2: packed run --------------------------------------------
    F: List[int] = [0] * (N + 1)
    shifted: Dict[int, List[int]] = {s: [] for s in {x for sh in shift_sets for x in sh}}
    chains: Dict[Tuple[int, ...], List[List[int]]] = {
        s: [[] for _ in s] for s in shift_sets
    }
    for n in range(1, N + 1):
        m_order = n - 1
        for s in shifted:
            shifted[s].append(mpz(F[m_order]) >> (b * s))
        for shifts, levels in chains.items():
            for j in range(len(shifts)):
                if j == 0:
                    val = shifted[shifts[0]][m_order]
                elif j == 1 and shifts[0] == shifts[1]:
                    # square of one series: halve the Cauchy product
                    fac = shifted[shifts[0]]
                    val = mpz(0)
                    half = (m_order + 1) // 2
                    for m in range(half):
                        if fac[m] and fac[m_order - m]:
                            val += fac[m] * fac[m_order - m]
                    val *= 2
                    if m_order % 2 == 0 and fac[m_order // 2]:
                        val += fac[m_order // 2] ** 2
                else:
                    prev = levels[j - 1]
                    fac = shifted[shifts[j]]
                    val = mpz(0)
                    for m in range(m_order + 1):
                        if prev[m] and fac[m_order - m]:
                            val += prev[m] * fac[m_order - m]
                levels[j].append(val)
        acc = mpz(0)
        for c, shifts, coeff in imonos:
            if not shifts:
                if m_order == 0:
                    acc += mpz(coeff) << (b * c)
                continue
            top = chains[shifts][-1][m_order]
            if top:
                acc += (coeff * top) << (b * c)
        F[n] = int(acc)
    return PartitionSolution(wf=wf, N=N, slot_bits=b, denom=D, packed=F)


# ---------------------------------------------------------------------------
# Pointed exact tables
# ---------------------------------------------------------------------------


def compute_pointed(solution: PartitionSolution, max_order: int = 24) -> PartitionSolution:
    """Attach the two pointed coefficient tables (exact, small orders).

    W^(vertex)_p = n [x^n] W_p (a vertex is marked uniformly via x d/dx);
    W^(K)_p = the marked recursion G_p = 1_{p=K} W_p + x sum_w sum_i
    G_{p_i} prod_{j != i} W_{p_j}, marking one vertex of flux exactly K.
    """
    wf = solution.wf
    N = min(solution.N, max_order)
    K = wf.K
    Wv: List[Dict[int, Fraction]] = [dict() for _ in range(N + 1)]
    Gk: List[Dict[int, Fraction]] = [dict() for _ in range(N + 1)]
    W: List[Dict[int, Fraction]] = [dict()]
    for n in range(1, N + 1):
        row = {}
        for p in range(wf.K * n + 1):
            v = solution.coefficient(n, p)
            if v:
                row[p] = v
        W.append(row)
        Wv[n] = {p: n * v for p, v in row.items()}

    entries = list(wf.entries())
    for n in range(1, N + 1):
        acc: Dict[int, Fraction] = {}
        if K in W[n]:
            acc[K] = W[n][K]
        for c, spots, w in entries:
            k = len(spots)
            if k == 0:
                continue
            # split x-order n-1 over k children, each >= 1
            for split in _compositions(n - 1, k):
                for fluxes in itertools.product(
                    *[sorted(W[m].keys() | Gk[m].keys()) for m in split]
                ):
                    if any(f < s for f, s in zip(fluxes, spots)):
                        continue
                    p = sum(f - s for f, s in zip(fluxes, spots)) + c
                    for marked in range(k):
                        term = w
                        for i, (m, f) in enumerate(zip(split, fluxes)):
                            factor = Gk[m].get(f) if i == marked else W[m].get(f)
                            if not factor:
                                term = None
                                break
                            term *= factor
                        if term:
                            acc[p] = acc.get(p, Fraction(0)) + term
        Gk[n] = {p: v for p, v in acc.items() if v}
    solution.pointed_vertex = Wv
    solution.pointed_k = Gk
    return solution


def _compositions(total: int, parts: int):
    if parts == 0:
        if total == 0:
            yield ()
        return
    if parts == 1:
        if total >= 1:
            yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


# ---------------------------------------------------------------------------
# Numeric evaluation at fixed x
# ---------------------------------------------------------------------------


@dataclass
class NumericEvaluation:
    """Flux-truncated partition function values at one x.

    ``tilted`` holds V_p = y_scale^p W_p as float64 (safe dynamic range);
    ``tilted_mp`` the refined values as gmpy2.mpfr at ``precision`` bits.
    Untilted values W_p are reconstructed on demand (they can overflow
    float64, which is the whole reason for the tilt + big exponents).
    """

    model: str
    x: Fraction
    P_max: int
    precision: int
    y_scale: float
    tilted: np.ndarray
    tilted_mp: List[mpfr]
    converged: bool
    diverged: bool
    iterations: int
    residual: float
    pointed_vertex_mp: Optional[List[mpfr]] = None
    pointed_k_mp: Optional[List[mpfr]] = None
    _solver_state: Optional[dict] = None

    def W(self, p: int) -> mpfr:
        with gmpy2.context(precision=self.precision + 32):
            return self.tilted_mp[p] * mpfr(self.y_scale) ** (-p)

    def log_w(self) -> np.ndarray:
        """log W_p as float64 across the flux window (NaN where W_p = 0)."""
        out = np.full(self.P_max + 1, np.nan)
        ly = math.log(self.y_scale)
        for p, v in enumerate(self.tilted_mp):
            if v > 0:
                out[p] = float(gmpy2.log(v)) - p * ly
        return out

    def tilde(self, y: float) -> np.ndarray:
        """W~_p = y^p W_p as float64 for a caller-chosen exponential tilt."""
        logs = self.log_w() + np.arange(self.P_max + 1) * math.log(y)
        return np.exp(logs - np.nanmax(logs[: self.P_max // 2 + 1]))

    def log_pointed_k(self) -> np.ndarray:
        out = np.full(self.P_max + 1, np.nan)
        ly = math.log(self.y_scale)
        for p, v in enumerate(self.pointed_k_mp or []):
            if v > 0:
                out[p] = float(gmpy2.log(v)) - p * ly
        return out

    def log_pointed_vertex(self) -> np.ndarray:
        out = np.full(self.P_max + 1, np.nan)
        ly = math.log(self.y_scale)
        for p, v in enumerate(self.pointed_vertex_mp or []):
            if v > 0:
                out[p] = float(gmpy2.log(v)) - p * ly
        return out

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "x": str(self.x),
            "P_max": self.P_max,
            "precision": self.precision,
            "converged": self.converged,
            "diverged": self.diverged,
            "iterations": self.iterations,
            "residual": self.residual,
        }


class _Groups:
    """Weight entries grouped by spot multiset (shared convolutions)."""

    def __init__(self, wf: WeightFunction):
        self.K = wf.K
        table: Dict[Tuple[int, ...], Dict[int, Fraction]] = {}
        self.leaf: Dict[int, Fraction] = {}
        for c, spots, w in wf.entries():
            if not spots:
                self.leaf[c] = self.leaf.get(c, Fraction(0)) + w
                continue
            key = tuple(sorted(spots))
            table.setdefault(key, {})
            table[key][c] = table[key].get(c, Fraction(0)) + w
        # ordered tuples with the same multiset are distinct table entries
        # and all contribute; grouping keeps the sum exact.
        self.groups: List[Tuple[Tuple[int, ...], Dict[int, Fraction]]] = sorted(
            table.items()
        )


def _phi_float(
    V: np.ndarray,
    groups: _Groups,
    xf: float,
    y0: float,
    P: int,
    frontier: int | None = None,
    fft_ok: bool = True,
) -> np.ndarray:
    out = np.zeros(P + 1)
    for c, w in groups.leaf.items():
        out[c] += float(w) * y0**c
    # FFT convolution scatters absolute noise of order 1e-16 * max over the
    # whole output.  When the profile spans a large dynamic range that noise
    # can exceed genuine small entries and destroy the monotone iteration,
    # so callers must request direct convolution unless the profile is
    # known to be flat (well tilted).
    for spots, by_c in groups.groups:
        conv = None
        for s in spots:
            u = V[s:]
            if conv is None:
                conv = u
            elif fft_ok:
                conv = fftconvolve(conv, u)[: P + 1]
            else:
                with np.errstate(over="ignore", invalid="ignore"):
                    conv = np.convolve(conv, u)[: P + 1]
        conv = conv[: P + 1]
        for c, w in by_c.items():
            contrib = float(w) * (y0 ** (c - sum(spots)))
            out[c : c + len(conv)] += contrib * conv[: max(0, P + 1 - c)]
    out *= xf
    np.maximum(out, 0.0, out=out)
    # FFT convolution scatters ~1e-16-relative noise over the whole output;
    # entries beyond the reachable support are exactly zero, so zeroing them
    # stops the noise from seeding spurious growth there.
    if frontier is not None and frontier < P:
        out[frontier + 1 :] = 0.0
    return out[: P + 1]


def _advance_frontier(wf: WeightFunction, top: int, P: int) -> int:
    """Largest flux reachable after one more application of the map."""
    best = -1
    for c, spots, _w in wf.entries():
        k = len(spots)
        if k == 0:
            cand = c
        elif top < max(spots):
            continue
        else:
            cand = k * top + c - sum(spots)
        best = max(best, cand)
    return min(best, P)


def _jacobian_float(
    V: np.ndarray, groups: _Groups, xf: float, y0: float, P: int
) -> np.ndarray:
    """(dPhi/dV) as dense float64.

    The derivative with respect to V_q of a group term is a function of
    p - q alone except for the child-flux floor q >= s_i, so the matrix is
    one Toeplitz matrix built from accumulated correlation vectors, plus
    corrections confined to the first K columns."""
    n = P + 1
    idx = np.arange(n)
    total_col = np.zeros(n)
    total_row = np.zeros(n)
    corrections: List[Tuple[int, np.ndarray]] = []  # (s_i, per-diagonal vec)
    for spots, by_c in groups.groups:
        k = len(spots)
        shifted = [V[s:] for s in spots]
        # distinguished positions with equal spots coincide; use multiplicity
        seen: Dict[int, int] = {}
        for s in spots:
            seen[s] = seen.get(s, 0) + 1
        for s_i, mult in seen.items():
            others = np.array([1.0])
            consumed = False
            for j, s in enumerate(spots):
                if s == s_i and not consumed:
                    consumed = True
                    continue
                others = fftconvolve(others, shifted[j])[: 2 * n]
            for c, w in by_c.items():
                coef = mult * xf * float(w) * (y0 ** (c - sum(spots)))
                col = np.zeros(n)
                dvals = idx - c + s_i
                valid = (dvals >= 0) & (dvals < len(others))
                col[valid] = coef * others[dvals[valid]]
                row = np.zeros(n)
                dvals_r = -idx - c + s_i
                valid_r = (dvals_r >= 0) & (dvals_r < len(others))
                row[valid_r] = coef * others[dvals_r[valid_r]]
                total_col += col
                total_row += row
                if s_i > 0:
                    corrections.append((s_i, (col, row)))
    J = toeplitz(total_col, total_row)
    for s_i, (col, row) in corrections:
        for q in range(min(s_i, n)):
            # remove this term from columns below its floor
            up = idx - q  # p - q diagonal offsets down the column
            colvals = np.where(up >= 0, col[np.abs(up)], row[np.abs(up)])
            J[:, q] -= colvals
    return J


def _pack_vec(ints: Sequence[int], width_bytes: int) -> int:
    buf = bytearray()
    for v in ints:
        buf += int(v).to_bytes(width_bytes, "little")
    return int.from_bytes(bytes(buf), "little")


def _unpack_vec(big: int, width_bytes: int, length: int) -> List[int]:
    big = int(big)
    nbytes = max(width_bytes * length + 16, (big.bit_length() + 7) // 8 + 1)
    data = big.to_bytes(nbytes, "little")
    return [
        int.from_bytes(data[i * width_bytes : (i + 1) * width_bytes], "little")
        for i in range(length)
    ]


def _phi_residual_mp(
    V_mp: List[mpfr],
    groups: _Groups,
    x: Fraction,
    y0: float,
    P: int,
    prec: int,
) -> List[mpfr]:
    """Phi(V) - V with exact integer convolutions at fixed-point scale.

    V is nonnegative, so a k-fold convolution of rounded fixed-point
    vectors is exact integer arithmetic; rounding enters only at the
    initial quantization (relative 2^-g) and the final scalar multiplies.
    """
    g = prec + 48
    ctx = gmpy2.context(precision=prec + 64)
    with ctx:
        scale = mpfr(2) ** g
        q = [int(gmpy2.rint_floor(v * scale)) if v > 0 else 0 for v in V_mp]
        width = max((int(v).bit_length() for v in q), default=1)
        out = [mpfr(0) for _ in range(P + 1)]
        for c, w in groups.leaf.items():
            out[c] += (mpfr(w.numerator) / w.denominator) * mpfr(y0) ** c
        for spots, by_c in groups.groups:
            k = len(spots)
            wb = (k * width + (k - 1) * (P + 1).bit_length()) // 8 + 2
            conv_scale = mpfr(2) ** (-g * k)
            packs = [_pack_vec(q[s : P + 1], wb) for s in spots]
            prodv = packs[0]
            for pk in packs[1:]:
                prodv *= pk
            conv = _unpack_vec(prodv, wb, P + 1)
            y0m = mpfr(y0)
            for c, w in by_c.items():
                coef = (mpfr(w.numerator) / w.denominator) * y0m ** (c - sum(spots))
                for p in range(c, P + 1):
                    out[p] += coef * conv[p - c] * conv_scale
        xm = mpfr(x.numerator) / x.denominator
        return [out[p] * xm - V_mp[p] for p in range(P + 1)]


def _linear_residual_mp(
    G_mp: List[mpfr],
    V_mp: List[mpfr],
    rhs: List[mpfr],
    groups: _Groups,
    x: Fraction,
    y0: float,
    P: int,
    prec: int,
) -> List[mpfr]:
    """rhs + J(V) G - G at high precision, J the fixed-point Jacobian.

    (J G)_p sums, over groups and over the distinguished child i, the
    convolution of G shifted by s_i with the other children's V factors.
    """
    g = prec + 48
    with gmpy2.context(precision=prec + 64):
        scale = mpfr(2) ** g
        qv = [int(gmpy2.rint_floor(v * scale)) if v > 0 else 0 for v in V_mp]
        qg = [int(gmpy2.rint_floor(v * scale)) if v > 0 else 0 for v in G_mp]
        width = max(
            (int(v).bit_length() for vec in (qv, qg) for v in vec), default=1
        )
        out = [mpfr(r) for r in rhs]
        y0m = mpfr(y0)
        for spots, by_c in groups.groups:
            k = len(spots)
            wb = (k * width + (k - 1) * (P + 1).bit_length()) // 8 + 2
            conv_scale = mpfr(2) ** (-g * k)
            # distinguished positions with equal spot values coincide;
            # count multiplicity instead of repeating the convolution
            seen: Dict[int, int] = {}
            for s in spots:
                seen[s] = seen.get(s, 0) + 1
            for s_i, mult in seen.items():
                prodv = _pack_vec(qg[s_i : P + 1], wb)
                for s in spots:
                    if s == s_i:
                        continue
                    prodv *= _pack_vec(qv[s : P + 1], wb)
                # remaining copies of s_i act as ordinary V children
                for _ in range(mult - 1):
                    prodv *= _pack_vec(qv[s_i : P + 1], wb)
                conv = _unpack_vec(prodv, wb, P + 1)
                xm = mpfr(x.numerator) / x.denominator
                for c, w in by_c.items():
                    coef = (
                        mult
                        * xm
                        * (mpfr(w.numerator) / w.denominator)
                        * y0m ** (c - sum(spots))
                    )
                    for p in range(c, P + 1):
                        out[p] += coef * conv[p - c] * conv_scale
        return [out[p] - G_mp[p] for p in range(P + 1)]


def _apply_tilt(V: np.ndarray, y0: float, slope: float) -> Tuple[np.ndarray, float]:
    """Multiply V_p by exp(-slope * p) in log space and absorb it into y0."""
    with np.errstate(divide="ignore"):
        logv = np.where(V > 0, np.log(np.maximum(V, 1e-320)), -np.inf)
    logv = logv - slope * np.arange(len(V))
    newV = np.where(logv > -650.0, np.exp(np.minimum(logv, 700.0)), 0.0)
    return newV, y0 * math.exp(-slope)


def _retilt(
    V: np.ndarray, y0: float, P: int, force: bool = False
) -> Tuple[np.ndarray, float]:
    """Flatten the geometric trend of V in log space.

    Entries pushed below the float64 floor are zeroed; the monotone
    iteration regrows them under the new tilt, so the iterate remains a
    subsolution and convergence from below is preserved.
    """
    vmax = V.max() if V.size else 0.0
    if not (vmax > 0.0) or not math.isfinite(vmax):
        return V, y0
    # Slope is estimated from entries well above the float noise floor so a
    # polluted frontier cannot skew it.
    sig = np.nonzero(V > vmax * 1e-13)[0]
    if len(sig) < 24:
        return V, y0
    lo, hi = sig[len(sig) // 4], sig[-1]
    if hi <= lo + 4:
        return V, y0
    out_of_band = vmax > 1e120 or V[sig].min() < 1e-120
    if not (out_of_band or force):
        return V, y0
    slope = (math.log(V[hi]) - math.log(V[lo])) / (hi - lo)
    if abs(slope) < 1e-12:
        return V, y0
    return _apply_tilt(V, y0, slope)


def _ratio_estimate(V: np.ndarray, refined: bool = False) -> float | None:
    """Estimate the limiting ratio V_p / V_{p+1} of a converging profile.

    The crude estimate is a median of log-ratios over an early window
    (low fluxes converge first, so this is reliable mid-iteration).  The
    refined estimate fits r_p = y (1 + beta / p) over a later window of an
    essentially converged profile and returns y.
    """
    pos = np.nonzero(V > 0)[0]
    if len(pos) < 32:
        return None
    top = int(pos[-1])
    if refined:
        w0, w1 = max(8, top // 4), max(24, top // 2)
    else:
        w0, w1 = max(4, top // 8), max(20, top // 3)
    w1 = min(w1, top - 1)
    ps = np.arange(w0, w1)
    ps = ps[(V[ps] > 0) & (V[ps + 1] > 0)]
    if len(ps) < 8:
        return None
    r = V[ps] / V[ps + 1]
    if refined and len(ps) >= 32:
        A = np.vstack([np.ones(len(ps)), 1.0 / ps]).T
        coef, *_ = np.linalg.lstsq(A, r, rcond=None)
        if coef[0] > 0:
            return float(coef[0])
    return float(np.exp(np.median(np.log(r))))


def _kleene_level(
    wf: WeightFunction,
    groups: _Groups,
    xf: float,
    y0: float,
    P: int,
    sweeps: int,
    tol: float,
    blow_up: float,
    fft_ok: bool,
) -> Tuple[np.ndarray, float, int, bool]:
    """Monotone iteration from zero at one truncation level.

    Returns (V, y0, iterations, diverged).  A safety tilt keeps the profile
    inside float64 range; its slope comes from an early window, which low
    fluxes have essentially converged by the time the range is large.
    """
    V = np.zeros(P + 1)
    frontier = -1
    diverged = False
    it = 0
    for it in range(1, sweeps + 1):
        new_frontier = _advance_frontier(wf, frontier, P)
        frontier_stalled = new_frontier <= frontier
        frontier = new_frontier
        Vn = _phi_float(V, groups, xf, y0, P, frontier=frontier, fft_ok=fft_ok)
        if not np.all(np.isfinite(Vn)) or Vn[0] > blow_up:
            diverged = True
            V = Vn
            break
        delta = np.max(np.abs(Vn - V))
        V = Vn
        vmax = V.max()
        if vmax > 1e120 or (vmax > 0 and vmax < 1e-120):
            r = _ratio_estimate(V)
            if r is not None and r > 0:
                V, y0 = _apply_tilt(V, y0, max(-5.0, min(5.0, -math.log(r))))
        if delta < tol * max(1.0, V.max()) and it > 8 and (
            frontier >= P or frontier_stalled
        ):
            break
    return V, y0, it, diverged


def evaluate(
    wf: WeightFunction,
    x,
    P_max: int,
    tol: float = 1e-12,
    precision: int = 256,
    blow_up: float = 1e12,
    kleene_iters: int = 400,
    pointed: bool = False,
) -> NumericEvaluation:
    """Solve the P_max-truncated positive system at fixed x.

    Convergence/divergence of the underlying monotone iteration is the
    basis for critical-point bisection; flux truncation removes trees, so
    values underestimate the untruncated ones and the truncated critical
    point sits above the true one.
    """
    x = Fraction(x) if not isinstance(x, Fraction) else x
    if x < 0:
        raise ValueError("x must be nonnegative")
    P = int(P_max)
    groups = _Groups(wf.symmetrize() if not wf.is_symmetric() else wf)
    xf = float(x)
    empty = [mpfr(0)] * (P + 1)
    if x == 0:
        return NumericEvaluation(
            model=wf.name, x=x, P_max=P, precision=precision, y_scale=1.0,
            tilted=np.zeros(P + 1), tilted_mp=empty, converged=True,
            diverged=False, iterations=1, residual=0.0,
        )

    # ---- stage 1: float64 Kleene with adaptive tilt --------------------
    # V_p = y0^p W_p; y0 is chosen so the profile in p is roughly flat,
    # which is what keeps float64 viable when W_p itself moves through
    # thousands of orders of magnitude.  A small pilot truncation run with
    # direct convolution (immune to FFT noise at any dynamic range) fixes
    # y0 near the limiting coefficient ratio; the full-size run then has a
    # flat profile, where FFT noise sits below every genuine entry and the
    # monotone iteration is safe.
    y0 = 1.0
    iters = 0
    P0 = min(P, 256)
    V, y0, it0, diverged = _kleene_level(
        wf, groups, xf, y0, P0, sweeps=8000, tol=tol, blow_up=blow_up,
        fft_ok=False,
    )
    iters += it0
    if not diverged:
        r = _ratio_estimate(V, refined=True)
        if r is not None and r > 0 and abs(math.log(r)) > 1e-6:
            y0 *= r
        if P0 == P:
            # keep the pilot iterate; just move it to the final tilt
            V, _ = _apply_tilt(V, 1.0, -math.log(r)) if (
                r is not None and r > 0
            ) else (V, y0)
        else:
            V, y0, it1, diverged = _kleene_level(
                wf, groups, xf, y0, P, sweeps=max(kleene_iters, 64),
                tol=tol, blow_up=blow_up, fft_ok=True,
            )
            iters += it1
    if diverged:
        return NumericEvaluation(
            model=wf.name, x=x, P_max=P, precision=precision, y_scale=y0,
            tilted=V, tilted_mp=empty, converged=False, diverged=True,
            iterations=iters, residual=float("inf"),
        )
    V, y0 = _retilt(V, y0, P)

    # ---- stage 2: Newton / chord to float64 machine precision ----------
    lu = None
    scale_ref = max(V.max(), 1e-300)
    res = float("inf")
    for outer in range(6):
        r = _phi_float(V, groups, xf, y0, P) - V
        res = np.max(np.abs(r))
        if res < 1e-15 * scale_ref:
            if lu is not None:
                break
        J = _jacobian_float(V, groups, xf, y0, P)
        A = np.eye(P + 1) - J
        try:
            lu = lu_factor(A)
        except Exception:
            diverged = True
            break
        for inner in range(40):
            iters += 1
            r = _phi_float(V, groups, xf, y0, P) - V
            res = np.max(np.abs(r))
            if res < 1e-15 * scale_ref:
                break
            step = lu_solve(lu, r)
            Vn = V + step
            if not np.all(np.isfinite(Vn)) or Vn.max() > blow_up:
                diverged = True
                break
            Vn = np.maximum(Vn, 0.0)
            if np.max(np.abs(Vn - V)) < 1e-18 * scale_ref:
                V = Vn
                break
            V = Vn
        if diverged or res < 1e-15 * scale_ref:
            break
    if diverged or lu is None:
        return NumericEvaluation(
            model=wf.name, x=x, P_max=P, precision=precision, y_scale=y0,
            tilted=V, tilted_mp=empty, converged=False, diverged=True,
            iterations=iters, residual=float("inf"),
        )

    # ---- stage 3: mixed-precision iterative refinement ------------------
    with gmpy2.context(precision=precision + 64):
        V_mp = [mpfr(v) for v in V]
    target = 2.0 ** (-(precision + 8)) * scale_ref
    residual = float("inf")
    for it in range(60):
        iters += 1
        r_mp = _phi_residual_mp(V_mp, groups, x, y0, P, precision)
        r = np.array([float(v) for v in r_mp])
        residual = float(np.max(np.abs(r)))
        if residual < target:
            break
        step = lu_solve(lu, r)
        with gmpy2.context(precision=precision + 64):
            V_mp = [v + mpfr(s) for v, s in zip(V_mp, step)]
    with gmpy2.context(precision=precision + 64):
        V_mp = [v if v > 0 else mpfr(0) for v in V_mp]

    ev = NumericEvaluation(
        model=wf.name, x=x, P_max=P, precision=precision, y_scale=y0,
        tilted=np.array([float(v) for v in V_mp]), tilted_mp=V_mp,
        converged=residual < max(target, tol * scale_ref), diverged=False,
        iterations=iters, residual=residual,
        _solver_state={"lu": lu, "groups": groups},
    )
    if pointed:
        compute_pointed_numeric(ev, wf)
    return ev


def compute_pointed_numeric(ev: NumericEvaluation, wf: WeightFunction) -> NumericEvaluation:
    """Solve the two linear pointed systems (I - J) G = rhs at the
    evaluated fixed point, with the same mixed-precision refinement."""
    if ev._solver_state is None:
        raise ValueError("evaluation lacks solver state (diverged or stale)")
    lu = ev._solver_state["lu"]
    groups = ev._solver_state["groups"]
    P, prec, y0 = ev.P_max, ev.precision, ev.y_scale
    K = wf.K
    with gmpy2.context(precision=prec + 64):
        rhs_k = [mpfr(0)] * (P + 1)
        rhs_k[K] = ev.tilted_mp[K]
        rhs_v = list(ev.tilted_mp)
    ev.pointed_k_mp = _solve_linear_mp(ev, groups, lu, rhs_k, P, prec, y0)
    ev.pointed_vertex_mp = _solve_linear_mp(ev, groups, lu, rhs_v, P, prec, y0)
    return ev


def _solve_linear_mp(ev, groups, lu, rhs_mp, P, prec, y0) -> List[mpfr]:
    rhs = np.array([float(v) for v in rhs_mp])
    G = lu_solve(lu, rhs)
    with gmpy2.context(precision=prec + 64):
        G_mp = [mpfr(v) for v in G]
    scale_ref = max(np.max(np.abs(G)), 1e-300)
    target = 2.0 ** (-(prec + 8)) * scale_ref
    for it in range(60):
        r_mp = _linear_residual_mp(G_mp, ev.tilted_mp, rhs_mp, groups, ev.x, y0, P, prec)
        r = np.array([float(v) for v in r_mp])
        if np.max(np.abs(r)) < target:
            break
        step = lu_solve(lu, r)
        with gmpy2.context(precision=prec + 64):
            G_mp = [g + mpfr(s) for g, s in zip(G_mp, step)]
    return G_mp
