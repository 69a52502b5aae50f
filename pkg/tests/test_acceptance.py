"""End-to-end verification of the pipeline at its quoted tolerances.

Each test corresponds to one headline claim about the models: exact
enumeration, the closed-form coefficient sequence, the critical point,
the two universal exponents, the limiting step measure, the exact and
Monte Carlo branch identities, renewal and ladder asymptotics, volume
growth and the continuum root equations.  Heavy inputs are session
fixtures (see conftest).
"""

import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from parkflux.asymptotics import (
    TildeTable,
    estimate_x_cr,
    fit_alpha,
    fit_beta,
    w0_coefficients,
)
from parkflux.lamperti import (
    find_root,
    lk_closed_form,
    lk_closed_form_check,
    tilt_proportionality,
)
from parkflux.measure import (
    OffspringTable,
    critical_tilt,
    drift_diagnostic,
    offspring_law,
    sample_volumes,
)
from parkflux.trees import fpt_mass, sample_tree
from parkflux.walk import (
    key_formula_exact,
    ladder_tails_mc,
    renewal,
    sandwich_check,
)


# -- 1: exact series equals exhaustive enumeration -------------------------


@pytest.mark.parametrize("model_fixture", ["planar", "unit"])
def test_enumeration_oracle(model_fixture, planar, unit, planar_sol, unit_sol):
    wf = planar if model_fixture == "planar" else unit
    sol = planar_sol if model_fixture == "planar" else unit_sol
    for n in range(1, 6):
        for p in range(0, wf.K * n + 1):
            assert sol.coefficient(n, p) == fpt_mass(wf, n, p, max_n=6)


# -- 2: closed-form coefficient sequence ------------------------------------


def test_closed_form_coefficients(planar_sol):
    """[x^n] W_0 = 2 * 3^n (2n)! / (n! (n+2)!) -- 2, 9, 54, 378, ..."""
    for n in range(1, 12):
        closed = (
            2
            * Fraction(3) ** n
            * math.factorial(2 * n)
            // (math.factorial(n) * math.factorial(n + 2))
        )
        assert planar_sol.coefficient(n, 0) == closed
    assert [planar_sol.coefficient(n, 0) for n in (1, 2, 3, 4)] == [2, 9, 54, 378]


# -- 3: critical point from 200 coefficients ---------------------------------


def test_critical_point(planar_sol):
    coeffs = w0_coefficients(planar_sol)[:201]
    est = estimate_x_cr(coeffs)
    assert est.x_cr == pytest.approx(1.0 / 12.0, abs=1e-4)


# -- 4: coefficient decay exponent alpha --------------------------------------


def test_alpha_planar(planar_sol):
    alpha = fit_alpha(w0_coefficients(planar_sol))
    assert 2.4 <= float(alpha) <= 2.6


def test_alpha_unit_spot(unit_sol):
    alpha = fit_alpha(w0_coefficients(unit_sol))
    assert 2.3 <= float(alpha) <= 2.7


def test_alpha_synthetic():
    coeffs = [0.0] + [12.0**n * n ** (-1.5) for n in range(1, 401)]
    assert float(fit_alpha(coeffs)) == pytest.approx(1.5, abs=0.05)


# -- 5: flux decay exponent beta in both phases -------------------------------


def test_beta_critical(planar, crit_ev, crit_tilt):
    y, _ = crit_tilt
    beta = fit_beta(TildeTable.from_evaluation(crit_ev, y))
    assert 2.35 <= float(beta) <= 2.65


def test_beta_subcritical(planar, subcrit_ev):
    y, _ = critical_tilt(planar, subcrit_ev)
    beta = fit_beta(TildeTable.from_evaluation(subcrit_ev, y))
    assert 1.35 <= float(beta) <= 1.65


# -- 6: the limiting step measure ----------------------------------------------


def test_step_measure(crit_measure, subcrit_measure, crit_ev, crit_tilt):
    assert abs(crit_measure.total_mass() - 1.0) < 1e-3
    tail, _se = crit_measure.fit_tail_exponent()
    y, _ = crit_tilt
    beta = fit_beta(TildeTable.from_evaluation(crit_ev, y))
    assert abs(tail - float(beta)) < 0.2
    assert drift_diagnostic(crit_measure).verdict == "zero-drift"
    assert drift_diagnostic(subcrit_measure).verdict == "zero-drift"


# -- 7: exact branch identity -----------------------------------------------


@pytest.mark.parametrize("model_fixture", ["planar", "unit"])
@pytest.mark.parametrize("p", [2, 3, 4, 5])
@pytest.mark.parametrize("t", [1, 2, 3])
def test_branch_identity_exact(model_fixture, p, t, planar, unit):
    wf = planar if model_fixture == "planar" else unit
    rep = key_formula_exact(wf, p, t, order=10)
    assert rep.passed, rep.mismatch


def test_branch_identity_detects_mutation(planar):
    c, spots, w = next(iter(planar.entries()))
    rep = key_formula_exact(
        planar, 3, 2, order=10, perturb=(c, spots, Fraction(101, 100))
    )
    assert not rep.passed


# -- 8: two-sided hitting bound on the marked values ---------------------------


def test_sandwich(planar, crit_ev, crit_measure):
    rep = sandwich_check(planar, crit_ev, crit_measure, p_max=200, tolerance=1e-6)
    assert rep.passed, rep.violations[:5]
    lo, hi = rep.bracket  # W~(marked)_p * sqrt(p) over p in [20, 200]
    assert hi / lo < 3.0


# -- 9: renewal tables and ladder-variable tails -------------------------------


def test_renewal_and_ladders(crit_measure, rng):
    tables = renewal(crit_measure)
    assert tables.h_pre[0] == 1.0
    scaled = np.array(
        [tables.h_pre[p] * math.sqrt(p) for p in range(10, 501)]
    )
    assert scaled.max() / scaled.min() < 3.0
    ladders = ladder_tails_mc(crit_measure, 1_000_000, rng)
    assert 0.4 <= ladders.h1_exponent <= 0.6
    assert 0.23 <= ladders.t1_exponent <= 0.43


# -- 10: volume growth across a flux doubling -----------------------------------


def test_volume_growth(planar, crit_ev, rng):
    table = OffspringTable(planar, crit_ev)
    medians = {}
    for p in (64, 128):
        vs = sample_volumes(table, p, 10_000, rng)
        assert vs.abort_fraction < 0.01
        assert np.all(vs.vol_k <= vs.vol_total)
        medians[p] = float(np.median(vs.vol_total[~vs.aborted]))
    ratio = medians[128] / medians[64]
    assert 3.0 <= ratio <= 5.5


# -- 11: continuum root equations -----------------------------------------------


def test_root_equations():
    sub = find_root("subordinator", tol=1e-9)
    comp = find_root("compensated", tol=1e-9)
    assert abs(sub.root - 1.5) < 1e-6
    assert abs(comp.root - 2.5) < 1e-6
    assert lk_closed_form(2.5, 1.0) == pytest.approx(
        1.0 / math.sqrt(math.pi), abs=1e-14
    )
    assert lk_closed_form_check(2.5, 1.0, tol=1e-8)["pass"]
    for beta in (1.5, 2.5):
        verdict = tilt_proportionality(beta, tol=1e-10)
        assert verdict["pass"]


# -- 12: sampled trees follow the exact laws -------------------------------------


def test_offspring_law_chi_square(planar, crit_ev, rng):
    table = OffspringTable(planar, crit_ev)
    for p in (5, 20):
        law = offspring_law(planar, crit_ev, p)
        n_draws = 100_000
        flat, counts = table.draw_many(p, n_draws, rng)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        freq: dict = {}
        for i in range(n_draws):
            key = tuple(flat[offsets[i] : offsets[i + 1]])
            freq[key] = freq.get(key, 0) + 1
        # bin: atoms with expected count >= 10, remainder pooled
        observed, expected = [], []
        rest_obs, rest_exp = 0, 0.0
        for children, prob in law.atoms.items():
            e = prob * n_draws
            o = freq.pop(tuple(children), 0)
            if e >= 10:
                observed.append(o)
                expected.append(e)
            else:
                rest_obs += o
                rest_exp += e
        rest_obs += sum(freq.values())
        rest_exp += max(n_draws - sum(expected) - rest_exp, 0.0)
        if rest_exp > 0:
            observed.append(rest_obs)
            expected.append(rest_exp)
        expected = np.array(expected) * (sum(observed) / sum(expected))
        _stat, p_value = stats.chisquare(observed, expected)
        assert p_value > 0.01, (p, p_value)


def test_small_tree_frequencies_subcritical(planar, subcrit_ev, planar_sol, rng):
    """Under the x = 1/24 Boltzmann law at root flux 1, P(n vertices) =
    [x^n y^1] x^n / W_1; empirical frequencies for n <= 4 within 3 sigma."""
    x = Fraction(1, 24)
    p0 = 1
    table = OffspringTable(planar, subcrit_ev)
    n_trees = 30_000
    sizes = np.zeros(n_trees, dtype=int)
    for i in range(n_trees):
        tree = sample_tree(table, p0, rng)
        sizes[i] = tree.size()
    w_p = float(subcrit_ev.W(p0))
    for n in range(1, 5):
        prob = float(planar_sol.coefficient(n, p0) * x**n) / w_p
        emp = float(np.mean(sizes == n))
        sigma = math.sqrt(prob * (1 - prob) / n_trees)
        assert abs(emp - prob) < 3 * sigma + 1e-4, (n, emp, prob)
