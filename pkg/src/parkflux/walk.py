"""Random-walk view of the locally largest branch.

Step by step, the locally largest branch of the parked-tree branching
process has the law of an i.i.d. walk with increments from the flux step
measure, reweighted by the ratio of tilted partition functions at the
branch endpoints (a Doob h-transform).  This module verifies that
identity both exactly and by Monte Carlo, and builds the walk-side
fluctuation objects it feeds into: the pre-renewal function, the first
descending ladder variables, and the two-sided hitting bounds that
sandwich the flux-K-marked partition function.

The exact verification works with the *cleared* form of the identity:
both sides are multiplied by the root partition function and written as
exact rational power series in x.  In that form every power of the tilt
parameter cancels between the step measure and the endpoint ratio (the
per-step net tilt exponent is zero), so no irrational quantity ever
enters and the comparison is coefficient-by-coefficient over the
rationals.  Cylinder events are matched on (step increment, sibling flux
multiset): the weight table is exchangeable in its spot arguments, which
is exactly what makes the ordered tree-side bookkeeping (a sum over the
position of the continuing child) collapse to the walk-side convention
(an arity factor times the first-slot term); comparing ordered sibling
tuples instead would double-count.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .measure import NuHatSampler, StepMeasure
from .model import WeightFunction
from .series import Series
from .solver import (
    NumericEvaluation,
    PartitionSolution,
    compute_coefficients,
    compute_pointed,
)
from .trees import DecoRepro


# ---------------------------------------------------------------------------
# Walk paths and hitting times
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StoppingTimes:
    """First hitting times of (-inf, level], [level, inf) and {level} on a
    finite path (None when the path never gets there)."""

    level: int
    tau_leq: Optional[int]
    tau_geq: Optional[int]
    tau_eq: Optional[int]


def stopping_times(path: Sequence[int], level: int) -> StoppingTimes:
    tau_leq = tau_geq = tau_eq = None
    for i, s in enumerate(path):
        if tau_leq is None and s <= level:
            tau_leq = i
        if tau_geq is None and s >= level:
            tau_geq = i
        if tau_eq is None and s == level:
            tau_eq = i
    return StoppingTimes(level, tau_leq, tau_geq, tau_eq)


def sample_walk(sampler: NuHatSampler, p: int, steps: int, rng) -> DecoRepro:
    """i.i.d. steps of the (increment, siblings) law, packaged as the same
    trace type the tree-side exploration produces.

    ``ties[i]`` records a sibling equal to the next walk value, so the
    locally-largest event can be read off the trace exactly as on the
    tree side.
    """
    fluxes = [p]
    siblings: List[Tuple[int, ...]] = []
    ties: List[bool] = []
    current = p
    for _ in range(steps):
        q, sibs = sampler.sample(rng)
        current += q
        fluxes.append(current)
        siblings.append(tuple(sorted(sibs)))
        ties.append(any(y == current for y in sibs))
    return DecoRepro(fluxes=fluxes, siblings=siblings, ties=ties)


# ---------------------------------------------------------------------------
# Exact verification of the h-transform identity
# ---------------------------------------------------------------------------


def _distinct_assignments(
    values: Tuple[int, ...], minima: Tuple[int, ...]
) -> Iterator[Tuple[int, ...]]:
    """Distinct orderings of the multiset ``values`` that respect the
    per-slot minima (slot j must receive at least ``minima[j]``)."""
    seen = set()
    for perm in itertools.permutations(values):
        if perm in seen:
            continue
        seen.add(perm)
        if all(v >= m for v, m in zip(perm, minima)):
            yield perm


def _series_of(sol: PartitionSolution, p: int, order: int) -> Series:
    if p > sol.flux_max:
        return Series.zero(order)
    return sol.series(p, order)


def _pointed_series(sol: PartitionSolution, p: int, order: int) -> Series:
    assert sol.pointed_k is not None
    coeffs = [Fraction(0)]
    for n in range(1, order):
        coeffs.append(sol.pointed_k[n].get(p, Fraction(0)) if n < len(sol.pointed_k) else Fraction(0))
    return Series(coeffs, order)


def _walk_step_series(
    wf: WeightFunction,
    sol: PartitionSolution,
    q: int,
    sibs: Tuple[int, ...],
    order: int,
    perturb: Optional[Tuple[int, Tuple[int, ...], Fraction]] = None,
) -> Series:
    """Walk-side cleared step weight for the cylinder (q, sibling multiset).

    Convention of the step measure: the continuing child occupies the
    first spot slot and an arity factor (k+1) counts its possible
    positions — valid because the weight table is exchangeable.
    """
    total = Series.zero(order)
    for c, spots, w in wf.entries():
        if not spots:
            continue  # leaf entries end the branch and carry no step
        if len(spots) - 1 != len(sibs):
            continue
        if c != sum(spots) - sum(sibs) - q:
            continue
        if perturb is not None and (c, spots) == perturb[:2]:
            w = w * perturb[2]
        arity = len(spots)
        for arrangement in _distinct_assignments(sibs, spots[1:]):
            term = Series.constant(arity * w, order)
            for y in arrangement:
                term = term * _series_of(sol, y, order)
            total = total + term
    return total.shift(1)  # the factor x: one vertex consumed per step


def _tree_step_series(
    wf: WeightFunction,
    sol: PartitionSolution,
    s_new: int,
    q: int,
    sibs: Tuple[int, ...],
    order: int,
) -> Series:
    """Tree-side cleared step weight for the same cylinder.

    Sums over the position of the continuing child among the ordered
    spot slots, keeping the spot constraint s_slot <= new flux explicit;
    no arity shortcut is taken, so agreement with the walk-side form is
    a genuine check of the exchangeable bookkeeping.
    """
    total = Series.zero(order)
    for c, spots, w in wf.entries():
        if not spots:
            continue
        if len(spots) - 1 != len(sibs):
            continue
        if c != sum(spots) - sum(sibs) - q:
            continue
        for pos in range(len(spots)):
            if spots[pos] > s_new:
                continue
            rest = spots[:pos] + spots[pos + 1 :]
            for arrangement in _distinct_assignments(sibs, rest):
                term = Series.constant(w, order)
                for y in arrangement:
                    term = term * _series_of(sol, y, order)
                total = total + term
    return total.shift(1)


def _enumerate_paths(
    wf: WeightFunction,
    p: int,
    t: int,
    order: int,
    locally_largest: bool = True,
) -> Iterator[List[Tuple[int, Tuple[int, ...]]]]:
    """All cylinder paths of length t from flux p that can contribute a
    nonzero coefficient below the truncation order.

    Each step consumes at least one x-order and each sibling of flux y at
    least ceil(y / K) more (the smallest fully parked tree with that root
    flux); paths whose floor already exceeds the truncation order are
    skipped — both sides of the identity are identically zero there, so
    the comparison loses nothing.
    """
    K = wf.K
    entries = [e for e in wf.entries() if e[1]]

    def rec(S: int, depth: int, cost: int, prefix):
        if depth == t:
            yield list(prefix)
            return
        # reserve one x-order per remaining step plus one for the final
        # subtree hanging below the branch
        sib_budget = (order - 1) - cost - (t - depth) - 1
        if sib_budget < 0:
            return
        seen_cyl = set()
        for c, spots, _w in entries:
            slots = spots[1:]
            cap = min(K * sib_budget, S + K - 1) if locally_largest else K * sib_budget
            ranges = [range(s, cap + 1) for s in slots]
            for sibs in itertools.product(*ranges):
                sib_cost = sum(-(-y // K) for y in sibs)
                if sib_cost > sib_budget:
                    continue
                q = sum(spots) - c - sum(sibs)
                s_new = S + q
                if locally_largest:
                    if s_new < K or (sibs and max(sibs) >= s_new):
                        continue
                elif s_new < 0:
                    continue
                cyl = (q, tuple(sorted(sibs)))
                if cyl in seen_cyl:
                    continue
                seen_cyl.add(cyl)
                prefix.append(cyl)
                yield from rec(s_new, depth + 1, cost + 1 + sib_cost, prefix)
                prefix.pop()

    yield from rec(p, 0, 0, [])


@dataclass
class KeyFormulaReport:
    """Outcome of the exact coefficientwise check of the branch identity."""

    model: str
    p: int
    t: int
    order: int
    paths_checked: int
    passed: bool
    mismatch: Optional[Dict] = None
    lhs_total: List[Fraction] = field(default_factory=list)
    rhs_total: List[Fraction] = field(default_factory=list)

    def to_dict(self) -> Dict:
        out = {
            "model": self.model,
            "p": self.p,
            "t": self.t,
            "order": self.order,
            "paths_checked": self.paths_checked,
            "passed": self.passed,
        }
        if self.mismatch is not None:
            out["mismatch"] = {
                k: str(v) for k, v in self.mismatch.items()
            }
        return out


def key_formula_exact(
    wf: WeightFunction,
    p: int,
    t: int,
    order: int = 11,
    solution: Optional[PartitionSolution] = None,
    perturb: Optional[Tuple[int, Tuple[int, ...], Fraction]] = None,
) -> KeyFormulaReport:
    """Exact check of the h-transform identity on every length-t cylinder.

    For each admissible no-tie path with the branch flux staying >= K,
    the cleared tree-side cylinder mass (sum over continuing-child
    positions, spot constraints explicit) must equal the cleared
    walk-side mass (arity-factor convention) times the same final-flux
    partition series — coefficient by coefficient in x, as exact
    rationals.  ``perturb`` scales one weight entry on the walk side
    only, for mutation testing.
    """
    if p < wf.K:
        raise ValueError(f"start flux {p} below the bound K={wf.K}")
    if t < 0:
        raise ValueError("negative path length")
    sol = solution if solution is not None else compute_coefficients(wf, order - 1)
    if sol.N < order - 1:
        raise ValueError("solution truncated below the requested order")
    zero = [Fraction(0)] * order
    lhs_total = list(zero)
    rhs_total = list(zero)
    paths = 0
    mismatch = None
    if t == 0:
        final = _series_of(sol, p, order)
        return KeyFormulaReport(
            model=wf.name, p=p, t=0, order=order, paths_checked=1, passed=True,
            lhs_total=list(final.coeffs), rhs_total=list(final.coeffs),
        )
    for path in _enumerate_paths(wf, p, t, order, locally_largest=True):
        paths += 1
        lhs = Series.constant(1, order)
        rhs = Series.constant(1, order)
        S = p
        for q, sibs in path:
            S += q
            lhs = lhs * _tree_step_series(wf, sol, S, q, sibs, order)
            rhs = rhs * _walk_step_series(wf, sol, q, sibs, order, perturb)
        final = _series_of(sol, S, order)
        lhs = lhs * final
        rhs = rhs * final
        for n in range(order):
            lhs_total[n] += lhs[n]
            rhs_total[n] += rhs[n]
        if mismatch is None and lhs != rhs:
            n_bad = next(n for n in range(order) if lhs[n] != rhs[n])
            mismatch = {
                "path": tuple(path),
                "coefficient_order": n_bad,
                "lhs": lhs[n_bad],
                "rhs": rhs[n_bad],
            }
    return KeyFormulaReport(
        model=wf.name, p=p, t=t, order=order, paths_checked=paths,
        passed=mismatch is None, mismatch=mismatch,
        lhs_total=lhs_total, rhs_total=rhs_total,
    )


def cylinder_masses_by_enumeration(
    wf: WeightFunction, p: int, t: int, n_max: int = 6
) -> Dict[Tuple, List[Fraction]]:
    """Brute-force oracle: cylinder masses from exhaustive tree enumeration.

    Walks every fully parked tree with at most n_max vertices and root
    flux p, takes the locally largest trace, and bins the x^n weight of
    trees whose first t steps avoid ties and keep the branch flux >= K.
    Keys are ((q_1, sibs_1), ..., (q_t, sibs_t)); values are coefficient
    lists indexed by vertex count.
    """
    from .trees import enumerate_fpt, locally_largest

    K = wf.K
    out: Dict[Tuple, List[Fraction]] = {}
    for n in range(1, n_max + 1):
        for tree, w in enumerate_fpt(wf, n, p, max_n=n_max):
            trace = locally_largest(tree)
            if trace.length < t or any(trace.ties[:t]):
                continue
            if any(f < K for f in trace.fluxes[1 : t + 1]):
                continue
            key = tuple(
                (trace.fluxes[i + 1] - trace.fluxes[i], trace.siblings[i])
                for i in range(t)
            )
            acc = out.setdefault(key, [Fraction(0)] * (n_max + 1))
            acc[n] += w
    return out


def key_formula_tree_oracle(
    wf: WeightFunction,
    p: int,
    t: int,
    n_max: int = 6,
    solution: Optional[PartitionSolution] = None,
) -> bool:
    """Check the tree-side cylinder series against exhaustive enumeration.

    Independent of the step-series bookkeeping: the oracle only uses the
    parking pass and the trace of actual trees.
    """
    order = n_max + 1
    sol = solution if solution is not None else compute_coefficients(wf, n_max)
    enumerated = cylinder_masses_by_enumeration(wf, p, t, n_max)
    seen = set()
    for path in _enumerate_paths(wf, p, t, order, locally_largest=True):
        lhs = Series.constant(1, order)
        S = p
        for q, sibs in path:
            S += q
            lhs = lhs * _tree_step_series(wf, sol, S, q, sibs, order)
        lhs = lhs * _series_of(sol, S, order)
        key = tuple(path)
        seen.add(key)
        expected = enumerated.get(key, [Fraction(0)] * (n_max + 1))
        for n in range(1, n_max + 1):
            if lhs[n] != expected[n]:
                return False
    # every enumerated cylinder must have been visited
    return all(key in seen for key in enumerated)


# ---------------------------------------------------------------------------
# Pointed variant
# ---------------------------------------------------------------------------


@dataclass
class PointedKeyReport:
    """Exact check of the flux-K-marked branch inequality.

    The marked branch drops the locally-largest conditioning, so the
    spot constraint on the continuing child no longer comes for free:
    the tree side is bounded above by the walk side, with equality on
    every path whose flux stays above K.
    """

    model: str
    p: int
    t: int
    order: int
    paths_checked: int
    inequality_ok: bool
    equality_on_high_paths: bool
    strict_somewhere: bool
    mismatch: Optional[Dict] = None

    @property
    def passed(self) -> bool:
        return self.inequality_ok and self.equality_on_high_paths

    def to_dict(self) -> Dict:
        return {
            "model": self.model,
            "p": self.p,
            "t": self.t,
            "order": self.order,
            "paths_checked": self.paths_checked,
            "inequality_ok": self.inequality_ok,
            "equality_on_high_paths": self.equality_on_high_paths,
            "strict_somewhere": self.strict_somewhere,
            "passed": self.passed,
        }


def pointed_key_check(
    wf: WeightFunction,
    p: int,
    t: int,
    order: int = 8,
    solution: Optional[PartitionSolution] = None,
) -> PointedKeyReport:
    """Exact cylinderwise check of the marked-branch h-transform bound.

    The branch now runs toward a marked flux-K vertex, so the final
    factor is the marked partition series and paths may visit any
    nonnegative flux.  Per cylinder the tree side keeps the indicator
    that the continuing child's flux covers its spot; the walk side
    drops it, giving tree <= walk coefficientwise, with equality when
    the branch flux stays >= K (the spot values never exceed K).
    """
    sol = solution if solution is not None else compute_coefficients(wf, order - 1)
    if sol.pointed_k is None:
        compute_pointed(sol, max_order=order - 1)
    paths = 0
    inequality_ok = True
    equality_ok = True
    strict = False
    mismatch = None
    for path in _enumerate_paths(wf, p, t, order, locally_largest=False):
        paths += 1
        lhs = Series.constant(1, order)
        rhs = Series.constant(1, order)
        S = p
        high = True
        for q, sibs in path:
            S += q
            if S < wf.K:
                high = False
            lhs = lhs * _tree_step_series(wf, sol, S, q, sibs, order)
            rhs = rhs * _walk_step_series(wf, sol, q, sibs, order)
        final = _pointed_series(sol, S, order)
        lhs = lhs * final
        rhs = rhs * final
        path_equal = True
        for n in range(order):
            if lhs[n] > rhs[n]:
                inequality_ok = False
                if mismatch is None:
                    mismatch = {"path": tuple(path), "order": n,
                                "lhs": lhs[n], "rhs": rhs[n]}
            if lhs[n] < rhs[n]:
                path_equal = False
        if not path_equal:
            strict = True
            if high:
                equality_ok = False
                if mismatch is None:
                    mismatch = {"path": tuple(path), "note": "strict on high path"}
    return PointedKeyReport(
        model=wf.name, p=p, t=t, order=order, paths_checked=paths,
        inequality_ok=inequality_ok, equality_on_high_paths=equality_ok,
        strict_somewhere=strict, mismatch=mismatch,
    )


# ---------------------------------------------------------------------------
# Monte Carlo verification
# ---------------------------------------------------------------------------


@dataclass
class McComparison:
    """Two estimates of the same cylinder functional with their errors."""

    tree_side: float
    tree_stderr: float
    walk_side: float
    walk_stderr: float
    samples: int

    @property
    def z_score(self) -> float:
        spread = math.hypot(self.tree_stderr, self.walk_stderr)
        return abs(self.tree_side - self.walk_side) / spread if spread else math.inf

    @property
    def compatible(self) -> bool:
        return self.z_score <= 3.0

    def to_dict(self) -> Dict:
        return {
            "tree_side": self.tree_side,
            "tree_stderr": self.tree_stderr,
            "walk_side": self.walk_side,
            "walk_stderr": self.walk_stderr,
            "z_score": self.z_score,
            "compatible": self.compatible,
            "samples": self.samples,
        }


def key_formula_mc(
    wf: WeightFunction,
    ev: NumericEvaluation,
    y: float,
    p: int,
    t: int,
    samples: int,
    rng,
    table=None,
    sampler: Optional[NuHatSampler] = None,
) -> McComparison:
    """Monte Carlo version of the branch identity for f = 1.

    The tree side estimates the probability that the locally largest
    branch survives t steps with no tie and flux >= K throughout, by
    sampling only the branch (the rest of the tree is marginalized by
    the offspring law).  The walk side estimates the same event under
    the i.i.d. step law, reweighted by the tilted-partition-function
    ratio at the endpoints.
    """
    from .measure import OffspringTable
    from .trees import explore_locally_largest

    if table is None:
        table = OffspringTable(wf, ev)
    if sampler is None:
        sampler = NuHatSampler(wf, ev, y)
    K = wf.K
    log_wt = ev.log_w() + np.log(y) * np.arange(ev.P_max + 1)

    hits = 0
    for _ in range(samples):
        trace = explore_locally_largest(table, p, t, rng)
        if trace.length < t or any(trace.ties[:t]):
            continue
        if all(f >= K for f in trace.fluxes[1 : t + 1]):
            hits += 1
    lhs = hits / samples
    lhs_se = math.sqrt(max(lhs * (1 - lhs), 1e-300) / samples)

    vals = np.zeros(samples)
    for i in range(samples):
        trace = sample_walk(sampler, p, t, rng)
        if any(trace.ties) or any(f < K for f in trace.fluxes[1:]):
            continue
        if any(y_ > f for y_, f in zip(
                (max(s) if s else -1 for s in trace.siblings), trace.fluxes[1:])):
            continue
        s_t = trace.fluxes[-1]
        if s_t > ev.P_max:
            continue
        vals[i] = math.exp(log_wt[s_t] - log_wt[p])
    rhs = float(vals.mean())
    rhs_se = float(vals.std(ddof=1) / math.sqrt(samples))
    return McComparison(lhs, lhs_se, rhs, rhs_se, samples)


# ---------------------------------------------------------------------------
# Renewal and ladder structure of the step walk
# ---------------------------------------------------------------------------


def _probability_vector(measure: StepMeasure) -> np.ndarray:
    """nu as a probability vector indexed by K - q (q from K down to -M).

    Normalized including the extrapolated tail mass, so the walk it
    drives is (sub)stochastic with the tail treated as an immediate
    drop below every finite level.
    """
    total = measure.total_mass(with_tail=True)
    return np.asarray(measure.weights, dtype=float) / total


def _transition_matrix(prob: np.ndarray, K: int, lo: int, hi: int) -> np.ndarray:
    """Substochastic matrix of the walk restricted to states lo..hi.

    Jumps exiting the window (below lo or above hi) are absorbed; the
    caller accounts for where they land.
    """
    n = hi - lo + 1
    A = np.zeros((n, n))
    idx = np.arange(n)
    for q in range(-len(prob) + K + 1, K + 1):
        pr = prob[K - q]
        if pr == 0.0:
            continue
        src = idx[(idx + q >= 0) & (idx + q < n)]
        A[src, src + q] = pr
    return A


@dataclass
class RenewalTables:
    """Pre-renewal function of the step walk and its partial sums.

    h_pre(p) is the probability that the walk from 0 first enters
    (-inf, -p] exactly at -p; H_ren is its running sum.  Computed by a
    dense linear solve on the truncated state window [0, M]; mass that
    escapes above the window is absorbed (counted as a miss), and the
    ``sensitivity`` field reports the worst relative change when the
    window is halved.
    """

    M: int
    h_pre: np.ndarray
    H_ren: np.ndarray
    sensitivity: float

    def to_dict(self) -> Dict:
        return {
            "M": self.M,
            "h_pre_head": [float(v) for v in self.h_pre[:8]],
            "sensitivity": self.sensitivity,
        }


def _h_pre_window(prob: np.ndarray, K: int, U: int) -> np.ndarray:
    """h_pre(p) for p = 0..U via the translated first-passage system.

    By translation h_pre(p) = P_p(first entry of (-inf, 0] is exactly 0),
    so g(s) = sum_q nu(q) g(s+q) for s in [1, U] with g(0) = 1 and g = 0
    below, giving (I - A) g = b with b(s) = nu(-s).
    """
    A = _transition_matrix(prob, K, 1, U)
    b = np.zeros(U)
    M = len(prob) - 1 - K
    for s in range(1, U + 1):
        b[s - 1] = prob[K + s] if s <= M else 0.0
    g = linalg.solve(np.eye(U) - A, b)
    return np.concatenate([[1.0], g])


def renewal(measure: StepMeasure, U: Optional[int] = None) -> RenewalTables:
    prob = _probability_vector(measure)
    U = measure.M if U is None else U
    h = _h_pre_window(prob, measure.K, U)
    h_half = _h_pre_window(prob, measure.K, U // 2)
    lo = np.arange(1, U // 4)
    sens = float(np.max(np.abs(h[lo] - h_half[lo]) / np.maximum(h_half[lo], 1e-300)))
    return RenewalTables(M=U, h_pre=h, H_ren=np.cumsum(h), sensitivity=sens)


@dataclass
class LadderReport:
    """First descending ladder variables of the step walk, by simulation.

    H1 is the (negative) walk value at the first entry into (-inf, -1];
    T1 the time of that entry.  Exponents are log-log slopes of the
    empirical survival functions over dyadic grids.
    """

    samples: int
    h1_exponent: float
    t1_exponent: float
    censored_fraction: float
    h1_survival: Dict[int, float]
    t1_survival: Dict[int, float]
    stretched_t1: bool

    def to_dict(self) -> Dict:
        return {
            "samples": self.samples,
            "h1_exponent": self.h1_exponent,
            "t1_exponent": self.t1_exponent,
            "censored_fraction": self.censored_fraction,
            "stretched_t1": self.stretched_t1,
        }


def _corrected_step_arrays(
    measure: StepMeasure, j0: int = 200, depth: int = 1_000_000
):
    """Step distribution with the fitted tail law spliced in below -j0.

    The numerically computed nu carries a residual exponential factor
    from the finite flux window (an imperfect tilt); the fitted
    (geometric, polynomial) tail removes that artifact and extends the
    support to ``depth``.  Returns (cumulative probs, increments
    descending from K, survival nubar[j-1] = P(step <= -j)).
    """
    K = measure.K
    w = np.asarray(measure.weights, dtype=float)
    if measure.tail_mass and measure.tail_mass > 0.0:
        beta = measure.tail_exponent if measure.tail_exponent else 2.5
        g = measure.tail_geometric if measure.tail_geometric else 1.0
        g = min(g, 1.0)
        j0 = min(j0, measure.M)
        head = w[: K + j0 + 1]  # q = K .. -j0
        j = np.arange(j0 + 1, depth + 1)
        tail = head[-1] * g ** (j - j0) * (j / j0) ** (-beta)
        full = np.concatenate([head, tail])
    else:
        full = w.copy()  # exact finite support, nothing to splice
    full /= full.sum()
    incs = K - np.arange(full.size)
    nubar = np.cumsum(full[K + 1 :][::-1])[::-1]
    return np.cumsum(full), incs.astype(np.int64), nubar


def ladder_tails_mc(
    measure: StepMeasure,
    samples: int,
    rng,
    t_cap: int = 1 << 14,
    chunk: int = 1 << 17,
    pos_cap: int = 1 << 15,
) -> LadderReport:
    """Simulate the walk from 0 until its first entry into (-inf, -1].

    At zero drift the ladder height and epoch have the heavy polynomial
    tails of the beta = 5/2 universality class; in the negative-drift
    phase the epoch tail collapses faster than any power (flagged as
    ``stretched_t1`` when the dyadic survival log-ratios keep growing).

    The ladder-height tail is estimated by conditioning on the walk's
    pre-crossing occupation: each visited state s contributes its exact
    crossing probability nubar(s + x), so the deep tail has the
    variance of the visit counts instead of the (much larger) variance
    of rare crossing jumps.  The epoch tail uses the first-passage
    times directly; walks still alive at ``t_cap`` are censored and
    reported.
    """
    cum, incs, nubar = _corrected_step_arrays(measure)
    visit_hist = np.zeros(pos_cap, dtype=np.int64)
    t1_all: List[np.ndarray] = []
    censored = 0
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        done += n
        pos = np.zeros(n, dtype=np.int64)
        t1 = np.zeros(n, dtype=np.int64)
        alive = np.arange(n)
        for step in range(1, t_cap + 1):
            if alive.size == 0:
                break
            cur = np.minimum(pos[alive], pos_cap - 1)
            bc = np.bincount(cur)
            visit_hist[: bc.size] += bc
            draws = np.searchsorted(cum, rng.random(alive.size), side="right")
            np.clip(draws, 0, len(incs) - 1, out=draws)
            pos[alive] += incs[draws]
            fell = pos[alive] < 0
            if fell.any():
                t1[alive[fell]] = step
                alive = alive[~fell]
        censored += alive.size
        t1[alive] = t_cap + 1
        t1_all.append(t1)
    t1 = np.concatenate(t1_all)

    # Ladder-height tail from the occupation measure: P(H1 <= -x) =
    # sum_s u(s) nubar(s + x) with u(s) the expected visits to s before
    # the walk goes negative.  The empirical u is reliable only at small
    # s (visits to high states mostly belong to excursions longer than
    # any affordable time cap), but u(s) tends to a constant, so beyond
    # a small window it is continued flat at the last reliable level.
    u_hat = visit_hist / samples
    s0 = 64
    plateau = float(u_hat[s0 // 2 : s0].mean())
    nb2 = np.cumsum(nubar[::-1])[::-1]  # nb2[j-1] = sum_{i >= j} nubar(i)
    h1_grid = [1 << k for k in range(0, 11)]
    s_arr = np.arange(s0)
    h1_surv = {}
    for x in h1_grid:
        head = float(
            (u_hat[:s0] * nubar[np.minimum(s_arr + x - 1, len(nubar) - 1)]).sum()
        )
        tail = plateau * float(nb2[min(s0 + x - 1, len(nb2) - 1)])
        h1_surv[x] = head + tail
    t1_grid = [1 << k for k in range(0, 13)]
    t1_surv = {n_: float((t1 > n_).mean()) for n_ in t1_grid}

    def _slope(surv: Dict[int, float], lo: int, hi: int) -> float:
        xs = [x for x, v in surv.items() if lo <= x <= hi and v > 0]
        if len(xs) < 3:
            return math.nan
        lx = np.log([float(x) for x in xs])
        lv = np.log([surv[x] for x in xs])
        return float(-np.polyfit(lx, lv, 1)[0])

    h1_exp = _slope(h1_surv, 8, 1 << 9)
    t1_exp = _slope(t1_surv, 16, 1 << 12)

    ratios = []
    for a, b in zip(t1_grid, t1_grid[1:]):
        if t1_surv[a] > 0 and t1_surv[b] > 0:
            ratios.append(math.log(t1_surv[a] / t1_surv[b]))
    # a power tail has constant dyadic log-ratios; a stretched
    # exponential doubles them (roughly) every dyadic step
    stretched = (
        len(ratios) >= 5
        and ratios[-1] > 3.0 * ratios[2]
        and all(b > a for a, b in zip(ratios[2:-1], ratios[3:]))
    )

    return LadderReport(
        samples=samples,
        h1_exponent=h1_exp,
        t1_exponent=t1_exp,
        censored_fraction=censored / samples,
        h1_survival=h1_surv,
        t1_survival=t1_surv,
        stretched_t1=stretched,
    )


# ---------------------------------------------------------------------------
# Sandwich bounds for the flux-K-marked partition function
# ---------------------------------------------------------------------------


@dataclass
class SandwichReport:
    """Hitting-probability bounds around the tilted marked series.

    h_lower(p) = P_p(first entry of (-inf, K] lands exactly on K);
    h_upper(p) = expected visits to K before the walk goes negative.
    The tilted marked value must lie between W~_K * h_lower and
    W~_K * h_upper for every p in the window, up to ``tolerance``
    relative slack.
    """

    p_max: int
    tolerance: float
    violations: List[Tuple[int, float]]
    lower: np.ndarray
    upper: np.ndarray
    marked: np.ndarray
    bracket: Tuple[float, float]

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> Dict:
        return {
            "p_max": self.p_max,
            "tolerance": self.tolerance,
            "violations": self.violations[:5],
            "passed": self.passed,
            "sqrtp_bracket": self.bracket,
        }


def sandwich_check(
    wf: WeightFunction,
    ev: NumericEvaluation,
    measure: StepMeasure,
    p_max: int = 200,
    tolerance: float = 1e-6,
) -> SandwichReport:
    """Verify the two-sided hitting bound on the marked partition values.

    Both h functions are dense linear solves over the state window
    [0, M]; the marked values come from the independently computed
    marked fixed point, so agreement is a real cross-check of the walk
    representation.
    """
    K = wf.K
    prob = _probability_vector(measure)
    U = measure.M
    y = measure.y

    # lower: first passage below K lands exactly on K, from states > K
    A = _transition_matrix(prob, K, K + 1, U)
    n = U - K
    b = np.zeros(n)
    M = len(prob) - 1 - K
    for s in range(K + 1, U + 1):
        j = s - K  # jump q = -j lands exactly on K
        b[s - K - 1] = prob[K + j] if j <= M else 0.0
    h_lo = np.concatenate([[1.0], linalg.solve(np.eye(n) - A, b)])  # index p-K

    # upper: expected visits to K before going negative, from states >= 0
    A2 = _transition_matrix(prob, K, 0, U)
    e = np.zeros(U + 1)
    e[K] = 1.0
    h_hi = linalg.solve(np.eye(U + 1) - A2, e)

    ly = math.log(y)
    log_wt = ev.log_w() + ly * np.arange(ev.P_max + 1)
    log_marked = ev.log_pointed_k() + ly * np.arange(ev.P_max + 1)
    wt_K = math.exp(log_wt[K])

    violations: List[Tuple[int, float]] = []
    marked = np.zeros(p_max + 1)
    lower = np.zeros(p_max + 1)
    upper = np.zeros(p_max + 1)
    for p in range(K, p_max + 1):
        m = math.exp(log_marked[p])
        lo_v = wt_K * h_lo[p - K]
        hi_v = wt_K * h_hi[p]
        marked[p], lower[p], upper[p] = m, lo_v, hi_v
        if lo_v > m * (1 + tolerance):
            violations.append((p, float(lo_v / m - 1)))
        if m > hi_v * (1 + tolerance):
            violations.append((p, float(m / hi_v - 1)))
    window = np.arange(20, p_max + 1)
    scaled = marked[window] * np.sqrt(window)
    bracket = (float(scaled.min()), float(scaled.max()))
    return SandwichReport(
        p_max=p_max, tolerance=tolerance, violations=violations,
        lower=lower, upper=upper, marked=marked, bracket=bracket,
    )
