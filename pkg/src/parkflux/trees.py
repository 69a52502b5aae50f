"""Plane trees with cars, spots, and fluxes.

The combinatorial side of the package: the bottom-up parking pass, tree
weights, exhaustive enumeration of fully parked trees (the oracle against
which the coefficient solver is checked), the locally largest branch
exploration, and recursive Boltzmann sampling.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from .model import WeightFunction


@dataclass
class Tree:
    """A plane tree vertex: car count, and (spot, subtree) pairs in
    left-to-right order.  ``flux`` is filled in by :func:`park`."""

    cars: int = 0
    edges: List[Tuple[int, "Tree"]] = field(default_factory=list)
    flux: Optional[int] = None

    def vertices(self) -> Iterator["Tree"]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(child for _, child in node.edges)

    def size(self) -> int:
        return sum(1 for _ in self.vertices())

    def height(self) -> int:
        best, stack = 0, [(self, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            stack.extend((child, d + 1) for _, child in node.edges)
        return best

    def serialize(self) -> str:
        """Nested text format: flux:cars(spot->child, ...)."""
        flux = "?" if self.flux is None else str(self.flux)
        inner = ", ".join(f"{s}->{child.serialize()}" for s, child in self.edges)
        return f"{flux}:{self.cars}({inner})" if self.edges else f"{flux}:{self.cars}"


def park(tree: Tree) -> Tuple[Tree, bool, int]:
    """Single bottom-up pass: fill spots greedily, forward the excess.

    Returns the tree with flux labels filled in, whether every spot got
    occupied, and the total number of spots left free.
    """
    fully = True
    free = 0
    # post-order iterative traversal
    order: List[Tree] = []
    stack = [tree]
    while stack:
        node = stack.pop()
        order.append(node)
        stack.extend(child for _, child in node.edges)
    for node in reversed(order):
        flux = node.cars
        for spots, child in node.edges:
            incoming = child.flux
            parked = min(incoming, spots)
            if parked < spots:
                fully = False
                free += spots - parked
            flux += incoming - parked
        node.flux = flux
    return tree, fully, free


def park_event_driven(tree: Tree, order_rng=None) -> Tuple[bool, int, int]:
    """Car-by-car variant of the parking pass, used to exercise the
    order-independence (Abelian) property.

    Each car starts at its vertex and drives rootward, taking the first
    free spot it meets; a car reaching the root leaves through it.  Returns
    (fully_parked, root outflux, free spots).
    """
    nodes = list(tree.vertices())
    parent: Dict[int, Tuple[Optional[Tree], int]] = {id(tree): (None, -1)}
    capacity: Dict[Tuple[int, int], int] = {}
    for node in nodes:
        for idx, (spots, child) in enumerate(node.edges):
            parent[id(child)] = (node, idx)
            capacity[(id(node), idx)] = spots
    cars = [node for node in nodes for _ in range(node.cars)]
    if order_rng is not None:
        order_rng.shuffle(cars)
    outflux = 0
    for start in cars:
        node = start
        while True:
            up, idx = parent[id(node)]
            if up is None:
                outflux += 1
                break
            if capacity[(id(up), idx)] > 0:
                capacity[(id(up), idx)] -= 1
                break
            node = up
    free = sum(capacity.values())
    return free == 0, outflux, free


def weight(tree: Tree, wf: WeightFunction) -> Fraction:
    """Product over vertices of the table entry matched to (cars, spots)."""
    total = Fraction(1)
    for node in tree.vertices():
        w = wf.weight(node.cars, tuple(s for s, _ in node.edges))
        if not w:
            return Fraction(0)
        total *= w
    return total


# ---------------------------------------------------------------------------
# Enumeration (the oracle)
# ---------------------------------------------------------------------------


def plane_trees(n: int) -> Iterator[List[int]]:
    """Plane tree shapes on n vertices, as preorder child-count sequences."""
    if n == 1:
        yield [0]
        return
    for k in range(1, n):
        for split in _compositions(n - 1, k):
            for parts in itertools.product(*[list(plane_trees(m)) for m in split]):
                shape = [k]
                for part in parts:
                    shape.extend(part)
                yield shape


def _compositions(total: int, parts: int) -> Iterator[Tuple[int, ...]]:
    if parts == 1:
        yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _tree_from_shape(shape: Sequence[int]) -> Tree:
    pos = 0

    def build() -> Tree:
        nonlocal pos
        k = shape[pos]
        pos += 1
        node = Tree()
        for _ in range(k):
            node.edges.append((0, build()))
        return node

    return build()


def enumerate_fpt(
    wf: WeightFunction, n: int, p: int, max_n: int = 7
) -> List[Tuple[Tree, Fraction]]:
    """All fully parked trees with n vertices and root flux p, with weights.

    Exhaustive: every plane tree shape, every admissible (cars, spots)
    labeling drawn from the weight support.  Guarded by ``max_n``.
    """
    if n > max_n:
        raise ValueError(f"enumeration guard: n={n} exceeds {max_n}")
    if p > wf.K * n:
        return []
    by_arity: Dict[int, List[Tuple[int, Tuple[int, ...], Fraction]]] = {}
    for c, spots, w in wf.entries():
        by_arity.setdefault(len(spots), []).append((c, spots, w))
    out: List[Tuple[Tree, Fraction]] = []
    for shape in plane_trees(n):
        if any(k not in by_arity for k in shape):
            continue
        for labels in itertools.product(*[by_arity[k] for k in shape]):
            tree = _tree_from_shape(shape)
            wtotal = Fraction(1)
            for node, (c, spots, w) in zip(_preorder(tree), labels):
                node.cars = c
                node.edges = [(s, child) for s, (_, child) in zip(spots, node.edges)]
                wtotal *= w
            tree, fully, _ = park(tree)
            if fully and tree.flux == p:
                out.append((tree, wtotal))
    return out


def _preorder(tree: Tree) -> Iterator[Tree]:
    yield tree
    for _, child in tree.edges:
        yield from _preorder(child)


def fpt_mass(wf: WeightFunction, n: int, p: int, max_n: int = 7) -> Fraction:
    return sum((w for _, w in enumerate_fpt(wf, n, p, max_n)), Fraction(0))


# ---------------------------------------------------------------------------
# Locally largest branch
# ---------------------------------------------------------------------------


@dataclass
class DecoRepro:
    """Trace of the locally largest branch: flux values S_i, the sibling
    flux multisets dropped at each step, and tie bookkeeping."""

    fluxes: List[int]
    siblings: List[Tuple[int, ...]]
    ties: List[bool]

    @property
    def length(self) -> int:
        return len(self.fluxes) - 1

    def had_tie(self) -> bool:
        return any(self.ties)


def locally_largest(tree: Tree) -> DecoRepro:
    """Follow the child of maximal flux (leftmost on ties) until a leaf."""
    if tree.flux is None:
        park(tree)
    node = tree
    fluxes = [node.flux]
    siblings: List[Tuple[int, ...]] = []
    ties: List[bool] = []
    while node.edges:
        child_fluxes = [child.flux for _, child in node.edges]
        best = max(child_fluxes)
        idx = child_fluxes.index(best)
        ties.append(child_fluxes.count(best) > 1)
        siblings.append(tuple(sorted(f for i, f in enumerate(child_fluxes) if i != idx)))
        node = node.edges[idx][1]
        fluxes.append(node.flux)
    return DecoRepro(fluxes=fluxes, siblings=siblings, ties=ties)


def volumes(tree: Tree) -> Tuple[int, int]:
    """(total vertex count, count of vertices with flux exactly K is done
    by the caller passing K) — see :func:`volumes_k`."""
    raise NotImplementedError("use volumes_k(tree, K)")


def volumes_k(tree: Tree, K: int) -> Tuple[int, int]:
    """Vol• = number of vertices; Vol° = number of vertices of flux K."""
    if tree.flux is None:
        park(tree)
    vol = 0
    vol_k = 0
    for node in tree.vertices():
        vol += 1
        if node.flux == K:
            vol_k += 1
    return vol, vol_k


# ---------------------------------------------------------------------------
# Boltzmann sampling
# ---------------------------------------------------------------------------


class FluxHeadroomExceeded(Exception):
    """A sampled flux left the reliable window of the numeric evaluation."""


def sample_tree(offspring, p: int, rng, max_vertices: int = 10**7) -> Tree:
    """Recursive (stack-based) multitype branching sampling.

    ``offspring`` is any object with ``draw(p, rng) -> tuple of child
    fluxes`` raising :class:`FluxHeadroomExceeded` beyond its safe window
    (module ``measure`` provides one).  The returned tree carries flux
    labels only (cars/spots are integrated out by the offspring law).
    """
    root = Tree(flux=p)
    pending = [root]
    count = 1
    while pending:
        node = pending.pop()
        for q in offspring.draw(node.flux, rng):
            child = Tree(flux=q)
            node.edges.append((0, child))
            pending.append(child)
            count += 1
            if count > max_vertices:
                raise FluxHeadroomExceeded(f"tree exceeded {max_vertices} vertices")
    return root


def explore_locally_largest(offspring, p: int, steps: int, rng) -> DecoRepro:
    """Sample only the locally largest branch to a given depth: at each
    step draw one offspring tuple and keep the (leftmost) maximal child,
    recording the rest as sibling data.  Cheap even when the full tree
    would be enormous."""
    fluxes = [p]
    siblings: List[Tuple[int, ...]] = []
    ties: List[bool] = []
    current = p
    for _ in range(steps):
        tup = offspring.draw(current, rng)
        if not tup:
            break
        best = max(tup)
        idx = tup.index(best)
        ties.append(tup.count(best) > 1)
        siblings.append(tuple(sorted(f for i, f in enumerate(tup) if i != idx)))
        current = best
        fluxes.append(current)
    return DecoRepro(fluxes=fluxes, siblings=siblings, ties=ties)
