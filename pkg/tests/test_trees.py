"""Parking dynamics, branch traces and exhaustive enumeration."""

from fractions import Fraction
from typing import List, Tuple

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parkflux.trees import (
    Tree,
    enumerate_fpt,
    fpt_mass,
    locally_largest,
    park,
    park_event_driven,
    volumes_k,
)


def _build_tree(shape: List[Tuple[int, int, int]]) -> Tree:
    """Build a plane tree from (parent index, cars, spots) rows; row 0 is
    the root and its parent/spot entries are ignored."""
    nodes = [Tree(cars=shape[0][1])]
    for parent, cars, spots in shape[1:]:
        child = Tree(cars=cars)
        nodes[parent % len(nodes)].edges.append((spots, child))
        nodes.append(child)
    return nodes[0]


tree_st = st.lists(
    st.tuples(
        st.integers(min_value=0, max_value=7),
        st.integers(min_value=0, max_value=3),
        st.integers(min_value=0, max_value=2),
    ),
    min_size=1,
    max_size=8,
).map(_build_tree)


def test_park_single_vertex():
    t = Tree(cars=3)
    t, fully, free = park(t)
    assert t.flux == 3 and fully and free == 0


def test_park_fills_spots_before_flux():
    child = Tree(cars=2)
    root = Tree(cars=0, edges=[(1, child)])
    root, fully, free = park(root)
    assert child.flux == 2  # the child spends nothing: the spot is on its edge
    assert root.flux == 1  # one car parks on the edge spot, one flows out
    assert fully and free == 0


@settings(max_examples=100, deadline=None)
@given(tree_st)
def test_parking_conservation(tree):
    """cars = occupied spots + root flux."""
    tree, fully, free = park(tree)
    cars = sum(node.cars for node in tree.vertices())
    spots = sum(s for node in tree.vertices() for s, _ in node.edges)
    assert cars == (spots - free) + tree.flux
    assert fully == (free == 0)


@settings(max_examples=80, deadline=None)
@given(tree_st)
def test_event_driven_parking_agrees(tree):
    """Car-by-car driving gives the same outcome as the bottom-up pass
    (order independence of the parking dynamics)."""
    tree, fully, free = park(tree)
    fully2, flux2, free2 = park_event_driven(tree)
    assert (fully, tree.flux, free) == (fully2, flux2, free2)


@settings(max_examples=80, deadline=None)
@given(tree_st)
def test_locally_largest_trace_invariants(tree):
    tree, _, _ = park(tree)
    trace = locally_largest(tree)
    assert trace.fluxes[0] == tree.flux
    assert trace.length == len(trace.siblings) == len(trace.ties)
    for i in range(trace.length):
        sibs = trace.siblings[i]
        # the continuing child carries the maximal flux among its siblings
        assert all(trace.fluxes[i + 1] >= s for s in sibs)
        assert list(sibs) == sorted(sibs)
        if sibs and max(sibs) == trace.fluxes[i + 1]:
            assert trace.ties[i]


@settings(max_examples=80, deadline=None)
@given(tree_st)
def test_volumes_bound(tree):
    tree, _, _ = park(tree)
    vol, vol_k = volumes_k(tree, 2)
    assert 0 <= vol_k <= vol == tree.size()


def test_enumeration_matches_by_hand(planar):
    """One-vertex fully parked trees: flux equals the root car count."""
    for p in range(0, 3):
        mass = fpt_mass(planar, 1, p, max_n=2)
        expected = sum(
            w for c, spots, w in planar.entries() if not spots and c == p
        )
        assert mass == expected


def test_enumeration_weights_positive(planar):
    for tree, weight in enumerate_fpt(planar, 3, 1, max_n=4):
        assert weight > 0
        assert tree.flux == 1
        assert tree.size() == 3
