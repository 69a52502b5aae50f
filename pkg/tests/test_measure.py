"""The limiting step measure, offspring laws and volume sampling."""

import math
from fractions import Fraction

import numpy as np
import pytest

from parkflux.measure import (
    NuHatSampler,
    OffspringTable,
    critical_tilt,
    drift_diagnostic,
    mass_normalization_y,
    nu,
    offspring_law,
    sample_volumes,
    step_law_tv_distance,
    two_big_children_tail,
)


def test_support_bounded_above(planar, crit_measure):
    assert crit_measure.q_values[0] == planar.K
    assert all(crit_measure.nu(q) == 0 for q in range(planar.K + 1, planar.K + 5))


def test_critical_mass_is_one(crit_measure):
    assert crit_measure.total_mass() == pytest.approx(1.0, abs=1e-3)


def test_critical_tilt_minimizes_mass(planar, crit_ev, crit_tilt):
    y, mass = crit_tilt
    assert mass <= 1.0 + 1e-6
    for factor in (0.98, 1.02):
        assert mass_normalization_y(planar, crit_ev, y * factor) >= mass - 1e-9


def test_subcritical_mass_below_one(subcrit_measure):
    """Below criticality the minimal tilted mass dips strictly under 1."""
    assert subcrit_measure.total_mass(with_tail=False) < 1.0 - 1e-3


def test_tail_is_power_law_at_criticality(crit_measure):
    beta, se = crit_measure.fit_tail_exponent()
    assert 2.3 < beta < 2.7
    assert se < 0.05


def test_tail_is_damped_subcritically(subcrit_measure):
    """The subcritical measure carries a genuine geometric tail factor."""
    assert subcrit_measure.tail_geometric is not None
    assert subcrit_measure.tail_geometric < 0.9999


def test_drift_verdicts(crit_measure, subcrit_measure):
    assert drift_diagnostic(crit_measure).verdict == "zero-drift"
    # the mass-minimizing tilt zeroes the drift at any x; the subcritical
    # verdict is about the tail, not the mean
    assert abs(subcrit_measure.mean_step()) < 0.05


def test_probabilities_sum_to_one(crit_measure):
    probs = crit_measure.probabilities()
    assert probs.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(probs >= 0)


def test_offspring_law_is_probability(planar, crit_ev):
    for p in (1, 5, 20):
        law = offspring_law(planar, crit_ev, p)
        assert law.total_mass() == pytest.approx(1.0, abs=1e-9)
        assert abs(law.deficit) < 1e-6


def test_offspring_table_matches_law(planar, crit_ev, rng):
    table = OffspringTable(planar, crit_ev)
    law = offspring_law(planar, crit_ev, 5)
    n_draws = 40_000
    flat, counts = table.draw_many(5, n_draws, rng)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    freq: dict = {}
    for i in range(n_draws):
        key = tuple(flat[offsets[i] : offsets[i + 1]])
        freq[key] = freq.get(key, 0) + 1
    top = sorted(law.atoms.items(), key=lambda kv: -kv[1])[:10]
    for children, prob in top:
        emp = freq.get(tuple(children), 0) / n_draws
        sigma = math.sqrt(prob * (1 - prob) / n_draws)
        assert abs(emp - prob) < 5 * sigma + 1e-4


def test_tree_step_law_converges_to_nu(planar, crit_ev, crit_measure):
    """TV distance between the depth-p branch step law and nu shrinks."""
    d_small = step_law_tv_distance(planar, crit_ev, crit_measure, p=20)
    d_large = step_law_tv_distance(planar, crit_ev, crit_measure, p=200)
    assert d_large < d_small
    assert d_large < 0.02


def test_sample_volumes_invariants(planar, crit_ev, rng):
    table = OffspringTable(planar, crit_ev)
    vs = sample_volumes(table, 32, 400, rng)
    assert np.all(vs.vol_k <= vs.vol_total)
    assert 0.0 <= vs.abort_fraction < 0.05


def test_one_big_jump(planar, crit_ev, crit_tilt, rng):
    """Coincidences of two macroscopic siblings are polynomially suppressed
    relative to one."""
    y, _ = crit_tilt
    sampler = NuHatSampler(planar, crit_ev, y)
    one = two_big_children_tail(sampler, [10, 40], ell=1, samples=100_000, rng=rng)
    two = two_big_children_tail(sampler, [10, 40], ell=2, samples=100_000, rng=rng)
    assert two[10] < one[10]
    assert two[40] <= two[10]
    # single-jump tail decays but stays polynomial: ratio bounded away from 0
    assert 0.0 < one[40] < one[10]
