"""Exact series solve, the numeric fixed point and the marked variants."""

from fractions import Fraction

import numpy as np
import pytest

from parkflux.solver import (
    compute_coefficients,
    compute_pointed,
    evaluate,
)
from parkflux.trees import fpt_mass


def test_flux_cap(planar, planar_sol):
    """[x^n y^p] vanishes beyond the flux cap p = K n."""
    for n in range(1, 6):
        row = planar_sol.row(n)
        assert len(row) <= planar.K * n + 1
        assert all(v >= 0 for v in row)


@pytest.mark.parametrize("n", range(1, 6))
def test_series_matches_enumeration_planar(planar, planar_sol, n):
    for p in range(0, planar.K * n + 1):
        assert planar_sol.coefficient(n, p) == fpt_mass(planar, n, p, max_n=6)


@pytest.mark.parametrize("n", range(1, 6))
def test_series_matches_enumeration_unit(unit, unit_sol, n):
    for p in range(0, unit.K * n + 1):
        assert unit_sol.coefficient(n, p) == fpt_mass(unit, n, p, max_n=6)


def test_engines_agree(planar):
    a = compute_coefficients(planar, 12, engine="plain")
    b = compute_coefficients(planar, 12, engine="packed")
    for n in range(1, 13):
        assert a.row(n) == b.row(n)


def test_evaluate_monotone_in_x(planar):
    lo = evaluate(planar, Fraction(1, 30), P_max=60)
    hi = evaluate(planar, Fraction(1, 20), P_max=60)
    assert lo.converged and hi.converged
    assert np.all(hi.log_w()[:40] >= lo.log_w()[:40])


def test_evaluate_diverges_past_critical(planar):
    ev = evaluate(planar, Fraction(1, 10), P_max=60)
    assert not ev.converged


def test_evaluate_matches_series_at_small_x(planar, planar_sol):
    """Numeric W_p(x) agrees with the truncated exact series at tiny x,
    where the tail beyond order 400 is negligible."""
    x = Fraction(1, 100)
    ev = evaluate(planar, x, P_max=30)
    for p in (0, 1, 3):
        series_val = float(planar_sol.series(p, order=60).evaluate(x))
        assert float(ev.W(p)) == pytest.approx(series_val, rel=1e-12)


def test_pointed_vertex_is_n_times_coefficient(planar):
    sol = compute_coefficients(planar, 10)
    compute_pointed(sol, max_order=10)
    for n in range(1, 11):
        for p in range(0, planar.K * n + 1):
            assert sol.pointed_vertex[n].get(p, Fraction(0)) == n * sol.coefficient(n, p)


def test_pointed_k_counts_flux_k_vertices(planar):
    """[x^n] of the flux-K-marked series equals sum over fully parked trees
    of weight times the number of flux-K vertices; cross-checked against
    direct enumeration."""
    from parkflux.trees import enumerate_fpt, volumes_k

    sol = compute_coefficients(planar, 6)
    compute_pointed(sol, max_order=6)
    for n in range(1, 5):
        for p in range(0, planar.K * n + 1):
            expected = Fraction(0)
            for tree, w in enumerate_fpt(planar, n, p, max_n=5):
                _, vk = volumes_k(tree, planar.K)
                expected += w * vk
            assert sol.pointed_k[n].get(p, Fraction(0)) == expected
