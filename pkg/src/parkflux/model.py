"""Model definitions: vertex weight tables and their polynomial form.

A model assigns a rational weight ``w[c, (s_1..s_k)]`` to a vertex that
receives ``c`` cars, has ``k`` children, and whose child edges carry spot
capacities ``s_1..s_k`` (left to right).  Everything — car counts, arity,
spot capacities — is bounded by a single integer ``K``.

The same data can be read as a polynomial equation for the flux generating
function F(x, y): F = x * Q(y, F, D1 F, ..., DK F) where Di is the
divided-difference operator in y (an index shift in the flux-coefficient
basis).  ``from_polynomial`` / ``to_polynomial`` convert between the two
presentations; the polynomial-to-weights direction uses the symmetric
split, so the resulting tables are invariant under ``symmetrize``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

WeightKey = Tuple[int, Tuple[int, ...]]  # (c, spots)


def _arrangements(multiset: Tuple[int, ...]) -> List[Tuple[int, ...]]:
    return sorted(set(itertools.permutations(multiset)))


@dataclass
class CatalyticPolynomial:
    """Q(y, f_0, f_1, ..., f_K) as a sparse monomial dict.

    Keys are (c, (a_0, ..., a_K)): the monomial y^c * prod_i f_i^{a_i},
    where f_i stands for the i-th divided difference of F.
    """

    K: int
    monomials: Dict[Tuple[int, Tuple[int, ...]], Fraction]

    def degree_in_f(self) -> int:
        return max((sum(a) for _, a in self.monomials), default=0)

    def __eq__(self, other):
        if not isinstance(other, CatalyticPolynomial):
            return NotImplemented
        clean = lambda m: {k: v for k, v in m.items() if v}
        return self.K == other.K and clean(self.monomials) == clean(other.monomials)


@dataclass
class WeightFunction:
    """Bounded rational weight table for parked-tree vertices."""

    name: str
    K: int
    weights: Dict[WeightKey, Fraction] = field(default_factory=dict)

    # -- basic access ---------------------------------------------------

    def weight(self, c: int, spots: Tuple[int, ...]) -> Fraction:
        return self.weights.get((c, tuple(spots)), Fraction(0))

    def entries(self) -> Iterable[Tuple[int, Tuple[int, ...], Fraction]]:
        for (c, spots), w in sorted(self.weights.items()):
            if w:
                yield c, spots, w

    def max_arity(self) -> int:
        return max((len(s) for (_, s), w in self.weights.items() if w), default=0)

    # -- polynomial correspondence --------------------------------------

    @classmethod
    def from_polynomial(cls, name: str, poly: CatalyticPolynomial) -> "WeightFunction":
        """Split each monomial coefficient symmetrically over ordered spot
        tuples realising its multidegree."""
        weights: Dict[WeightKey, Fraction] = {}
        for (c, multideg), coeff in poly.monomials.items():
            if not coeff:
                continue
            if c > poly.K or any(i > poly.K for i, a in enumerate(multideg) if a):
                raise ValueError("monomial exceeds the stated bound K")
            multiset: Tuple[int, ...] = tuple(
                i for i, a in enumerate(multideg) for _ in range(a)
            )
            arrangements = _arrangements(multiset)
            share = Fraction(coeff, len(arrangements)) if multiset else Fraction(coeff)
            if not multiset:
                key = (c, ())
                weights[key] = weights.get(key, Fraction(0)) + coeff
                continue
            for s in arrangements:
                key = (c, s)
                weights[key] = weights.get(key, Fraction(0)) + share
        wf = cls(name=name, K=poly.K, weights=weights)
        wf._check_bounds()
        return wf

    def to_polynomial(self) -> CatalyticPolynomial:
        """Sum weights over ordered spot tuples with a given multidegree."""
        monomials: Dict[Tuple[int, Tuple[int, ...]], Fraction] = {}
        for (c, spots), w in self.weights.items():
            if not w:
                continue
            multideg = [0] * (self.K + 1)
            for s in spots:
                multideg[s] += 1
            key = (c, tuple(multideg))
            monomials[key] = monomials.get(key, Fraction(0)) + w
        return CatalyticPolynomial(K=self.K, monomials=monomials)

    # -- symmetrization --------------------------------------------------

    def symmetrize(self) -> "WeightFunction":
        """Average each weight over permutations of its spot tuple."""
        groups: Dict[Tuple[int, Tuple[int, ...]], Fraction] = {}
        for (c, spots), w in self.weights.items():
            key = (c, tuple(sorted(spots)))
            groups[key] = groups.get(key, Fraction(0)) + w * _order_count(spots)
        out: Dict[WeightKey, Fraction] = {}
        for (c, sorted_spots), total in groups.items():
            k = len(sorted_spots)
            avg = total / Fraction(math.factorial(k)) if k else total
            for s in _arrangements(sorted_spots):
                if avg:
                    out[(c, s)] = avg
        return WeightFunction(name=self.name, K=self.K, weights=out)

    def is_symmetric(self) -> bool:
        for (c, spots), w in self.weights.items():
            for s in itertools.permutations(spots):
                if self.weight(c, s) != w:
                    return False
        return True

    # -- validation -------------------------------------------------------

    def _check_bounds(self) -> List[str]:
        problems = []
        for (c, spots), w in self.weights.items():
            if not w:
                continue
            if w < 0:
                problems.append(f"negative weight at (c={c}, s={spots})")
            if c > self.K or len(spots) > self.K or any(s > self.K for s in spots):
                problems.append(f"entry (c={c}, s={spots}) exceeds bound K={self.K}")
            if c < 0 or any(s < 0 for s in spots):
                problems.append(f"entry (c={c}, s={spots}) has a negative index")
        return problems

    def dependency_graph(self, p_max: Optional[int] = None) -> "DependencyGraph":
        return DependencyGraph.build(self, p_max=p_max)

    def validate_assumptions(self) -> "AssumptionReport":
        """Check the standing structural assumptions.

        The unique-dominant-singularity condition in the vertex variable is
        analytic, not combinatorial; it is reported as 'empirical' here and
        probed numerically elsewhere.
        """
        problems = self._check_bounds()
        sym = self.is_symmetric()
        branching = any(len(s) >= 2 and w > 0 for (c, s), w in self.weights.items())
        graph = self.dependency_graph()
        p0 = graph.aperiodicity_rank()
        connects = graph.flux_zero_connected()
        positive = self._fluxes_positive()
        return AssumptionReport(
            bounded=not problems,
            problems=problems,
            exchangeable=sym,
            branching=branching,
            aperiodic=(p0 is not None and p0 <= self.K),
            aperiodicity_rank=p0,
            connected=connects and positive,
            dominant_singularity="empirical",
        )

    def _fluxes_positive(self, orders: int = 14) -> bool:
        """Low-order check that every small flux series has a positive term.

        Tiny independent dynamic program (kept local so validation does not
        depend on the solver module): coefficient n of flux p sums over root
        decompositions with child coefficients of order < n.
        """
        # table[n] = {p: coeff}
        table: List[Dict[int, Fraction]] = [dict() for _ in range(orders + 1)]
        for n in range(1, orders + 1):
            acc: Dict[int, Fraction] = {}
            for (c, spots), w in self.weights.items():
                if not w:
                    continue
                k = len(spots)
                if k == 0:
                    if n == 1:
                        acc[c] = acc.get(c, Fraction(0)) + w
                    continue
                # distribute order n-1 over k children, each >= 1
                for split in _compositions(n - 1, k):
                    for children in itertools.product(
                        *[list(table[m].items()) for m in split]
                    ):
                        ok = all(pi >= si for (pi, _), si in zip(children, spots))
                        if not ok:
                            continue
                        p = sum(pi - si for (pi, _), si in zip(children, spots)) + c
                        prod = w
                        for _, coeff in children:
                            prod *= coeff
                        acc[p] = acc.get(p, Fraction(0)) + prod
            table[n] = {p: v for p, v in acc.items() if v}
        seen = set()
        for n in range(1, orders + 1):
            seen.update(p for p, v in table[n].items() if v > 0)
        upto = min(2 * self.K + 2, self.K * orders)
        return all(p in seen for p in range(upto + 1))

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "K": self.K,
            "weights": [
                {"c": c, "k": len(s), "s": list(s), "w": str(w)}
                for c, s, w in self.entries()
            ],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_dict(cls, data: dict) -> "WeightFunction":
        weights: Dict[WeightKey, Fraction] = {}
        for entry in data["weights"]:
            s = tuple(entry["s"])
            if "k" in entry and entry["k"] != len(s):
                raise ValueError(f"entry arity mismatch: {entry}")
            key = (int(entry["c"]), s)
            if key in weights:
                raise ValueError(f"duplicate weight entry: {entry}")
            weights[key] = Fraction(entry["w"])
        wf = cls(name=data["name"], K=int(data["K"]), weights=weights)
        problems = wf._check_bounds()
        if problems:
            raise ValueError("; ".join(problems))
        return wf

    @classmethod
    def load(cls, path) -> "WeightFunction":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _order_count(spots: Tuple[int, ...]) -> int:
    """Number of permutations fixing the tuple (product of multiplicity
    factorials): used when regrouping ordered tuples by multiset."""
    counts: Dict[int, int] = {}
    for s in spots:
        counts[s] = counts.get(s, 0) + 1
    out = 1
    for m in counts.values():
        out *= math.factorial(m)
    return out


def _compositions(total: int, parts: int):
    """Ordered compositions of `total` into `parts` positive integers."""
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


@dataclass
class AssumptionReport:
    bounded: bool
    problems: List[str]
    exchangeable: bool
    branching: bool
    aperiodic: bool
    aperiodicity_rank: Optional[int]
    connected: bool
    dominant_singularity: str

    def ok(self) -> bool:
        return (
            self.bounded
            and self.exchangeable
            and self.branching
            and self.aperiodic
            and self.connected
        )

    def to_dict(self) -> dict:
        return {
            "bounded": self.bounded,
            "problems": self.problems,
            "exchangeable": self.exchangeable,
            "branching": self.branching,
            "aperiodic": self.aperiodic,
            "aperiodicity_rank": self.aperiodicity_rank,
            "connected": self.connected,
            "dominant_singularity": self.dominant_singularity,
            "ok": self.ok(),
        }


class DependencyGraph:
    """Directed graph on flux values: i -> j when the equation for flux i
    involves a factor at flux j.

    Edges are translation invariant away from the boundary (i -> j implies
    i+q -> j+q while indices stay admissible), so connectivity questions are
    settled on a finite window and extrapolated.
    """

    def __init__(self, edges: Dict[int, set], p_max: int):
        self.edges = edges
        self.p_max = p_max

    @classmethod
    def build(cls, wf: WeightFunction, p_max: Optional[int] = None) -> "DependencyGraph":
        if p_max is None:
            p_max = 6 * max(wf.K, 1) + 12
        edges: Dict[int, set] = {i: set() for i in range(p_max + 1)}
        # Feasibility of an edge i -> j through entry (c, spots) at child
        # slot l: the remaining children carry any fluxes >= their spots, so
        # the residual i - c - (j - s_l) must be 0 when there are no other
        # children and any nonnegative value otherwise.
        for (c, spots), w in wf.weights.items():
            if not w:
                continue
            k = len(spots)
            if k == 0:
                continue
            for l, s_l in enumerate(spots):
                for j in range(s_l, p_max + 1):
                    residual_base = c + (j - s_l)
                    if k == 1:
                        i = residual_base
                        if 0 <= i <= p_max:
                            edges[i].add(j)
                    else:
                        for i in range(residual_base, p_max + 1):
                            edges[i].add(j)
        return cls(edges, p_max)

    def flux_zero_connected(self) -> bool:
        """Directed reachability from flux 0 to some positive flux."""
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in self.edges.get(u, ()):
                if v >= 1:
                    return True
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return False

    def aperiodicity_rank(self) -> Optional[int]:
        """Smallest p0 with {p0, p0+1, ...} strongly connected (checked on
        the window [p0, p_max - K-ish], relying on translation invariance)."""
        margin = max(2, self.p_max // 4)
        core_top = self.p_max - margin
        for p0 in range(0, core_top):
            if self._strongly_connected(p0, core_top):
                return p0
        return None

    def _strongly_connected(self, lo: int, hi: int) -> bool:
        nodes = range(lo, hi + 1)

        def reach(start, rev=False):
            seen = {start}
            stack = [start]
            while stack:
                u = stack.pop()
                if rev:
                    nbrs = [v for v in range(lo, self.p_max + 1) if u in self.edges.get(v, ())]
                else:
                    nbrs = [v for v in self.edges.get(u, ()) if v >= lo]
                for v in nbrs:
                    if v not in seen:
                        seen.add(v)
                        stack.append(v)
            return seen

        fwd = reach(lo)
        bwd = reach(lo, rev=True)
        return all(v in fwd and v in bwd for v in nodes)


# ---------------------------------------------------------------------------
# Bundled models
# ---------------------------------------------------------------------------


def planar_map_polynomial() -> CatalyticPolynomial:
    """Q(y, f, f1) = (y+1)^2 f^2 + (2(y+1)^2 + (y+1)) f + (y+1) f1
    + ((y+1)^2 + (y+1)); flux series at zero counts rooted planar maps."""
    F = Fraction
    monomials = {
        # f^2 with (y+1)^2 = y^2 + 2y + 1
        (0, (2, 0, 0)): F(1),
        (1, (2, 0, 0)): F(2),
        (2, (2, 0, 0)): F(1),
        # f with 2(y+1)^2 + (y+1) = 2y^2 + 5y + 3
        (0, (1, 0, 0)): F(3),
        (1, (1, 0, 0)): F(5),
        (2, (1, 0, 0)): F(2),
        # f1 with (y+1)
        (0, (0, 1, 0)): F(1),
        (1, (0, 1, 0)): F(1),
        # constant with (y+1)^2 + (y+1) = y^2 + 3y + 2
        (0, (0, 0, 0)): F(2),
        (1, (0, 0, 0)): F(3),
        (2, (0, 0, 0)): F(1),
    }
    return CatalyticPolynomial(K=2, monomials=monomials)


def planar_map_model() -> WeightFunction:
    return WeightFunction.from_polynomial("planar_maps", planar_map_polynomial())


def unit_spot_model() -> WeightFunction:
    """Parking on plane trees with at most two children per vertex, exactly
    one spot per edge, and 0, 1, or 2 cars per vertex with weights 1, 2, 1
    (two independent fair coin arrivals).  The bound K is 2 because the
    arity and the car count reach 2, even though every spot capacity is 1.

    Car arrivals must be able to exceed the per-edge spot capacity:
    with at most one car per vertex every fully parked subtree would have
    surplus exactly zero, the flux walk would be frozen, and W_p would
    vanish for p >= 2."""
    F = Fraction
    weights: Dict[WeightKey, Fraction] = {}
    for c, wc in ((0, 1), (1, 2), (2, 1)):
        weights[(c, ())] = F(wc)
        weights[(c, (1,))] = F(wc)
        weights[(c, (1, 1))] = F(wc)
    return WeightFunction(name="unit_spot_parking", K=2, weights=weights)


_BUNDLED = {
    "planar_maps": planar_map_model,
    "unit_spot_parking": unit_spot_model,
}


def load_model(name_or_path: str) -> WeightFunction:
    """Load a bundled model by name, or any model file by path."""
    if name_or_path in _BUNDLED:
        try:
            ref = resources.files("parkflux").joinpath(f"models/{name_or_path}.json")
            return WeightFunction.from_dict(json.loads(ref.read_text()))
        except (FileNotFoundError, ModuleNotFoundError):
            return _BUNDLED[name_or_path]()
    return WeightFunction.load(name_or_path)


def bundled_model_names() -> List[str]:
    return sorted(_BUNDLED)
