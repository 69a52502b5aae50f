"""Random-walk representation: exact identities, renewal DP and ladders."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parkflux.measure import NuHatSampler, StepMeasure
from parkflux.walk import (
    key_formula_exact,
    key_formula_mc,
    key_formula_tree_oracle,
    ladder_tails_mc,
    pointed_key_check,
    renewal,
    sample_walk,
    sandwich_check,
    stopping_times,
)


# ---------------------------------------------------------------------------
# Exact identities at small order (the heavyweight grid lives in the
# acceptance suite; these are quick smoke points).
# ---------------------------------------------------------------------------


def test_key_formula_exact_small(planar):
    rep = key_formula_exact(planar, p=3, t=2, order=9)
    assert rep.passed
    assert rep.paths_checked > 0


def test_key_formula_t0_trivial(planar):
    assert key_formula_exact(planar, p=2, t=0, order=6).passed


def test_tree_enumeration_oracle(planar):
    assert key_formula_tree_oracle(planar, p=2, t=1, n_max=5)


def test_pointed_inequality_small(planar):
    rep = pointed_key_check(planar, p=3, t=1, order=8)
    assert rep.passed
    assert rep.strict_somewhere  # the bound is not vacuously an equality


# ---------------------------------------------------------------------------
# Walk sampling invariants.
# ---------------------------------------------------------------------------


def test_sampled_walk_increments_bounded(planar, crit_ev, crit_tilt, rng):
    y, _ = crit_tilt
    sampler = NuHatSampler(planar, crit_ev, y)
    trace = sample_walk(sampler, p=50, steps=30, rng=rng)
    for i in range(trace.length):
        q = trace.fluxes[i + 1] - trace.fluxes[i]
        assert q <= planar.K


def test_stopping_times_consistency():
    path = [5, 3, 7, 1, 0, 4]
    t = stopping_times(path, level=2)
    assert t.tau_leq == 3  # first index with value <= 2
    assert t.tau_geq == 0


def test_walk_empirical_step_law(crit_measure, rng):
    """Empirical increments of the simulated nu walk match nu itself."""
    probs = crit_measure.probabilities()
    qs = np.asarray(crit_measure.q_values)
    draws = rng.choice(qs, size=200_000, p=probs / probs.sum())
    for q in (2, 1, 0, -1, -5):
        emp = float(np.mean(draws == q))
        true = crit_measure.nu(q) / probs.sum()
        sigma = math.sqrt(true * (1 - true) / 200_000)
        assert abs(emp - true) < 5 * sigma + 1e-4


# ---------------------------------------------------------------------------
# Renewal DP.
# ---------------------------------------------------------------------------


def test_h_pre_normalization(crit_measure):
    tables = renewal(crit_measure)
    assert tables.h_pre[0] == 1.0
    assert np.all(tables.h_pre >= 0)
    assert np.all(np.diff(tables.H_ren) >= 0)


def test_h_pre_on_symmetric_unit_walk():
    """The +-1 symmetric walk always lands exactly on -p, and the upper
    absorbing window turns h_pre into the gambler's-ruin probability
    (U + 1 - p)/(U + 1) -- an exact closed-form oracle for the DP."""
    meas = StepMeasure(
        x=0.0,
        y=1.0,
        M=1,
        K=1,
        q_values=np.array([1, 0, -1]),
        weights=np.array([0.5, 0.0, 0.5]),
        tail_mass=0.0,
        tail_exponent=None,
        tail_geometric=None,
        tail_drift=0.0,
        atoms=None,
    )
    U = 60
    tables = renewal(meas, U=U)
    ps = np.arange(0, 30)
    expected = (U + 1.0 - ps) / (U + 1.0)
    assert np.allclose(tables.h_pre[:30], expected, atol=1e-9)


def test_ladders_on_symmetric_unit_walk(rng):
    """The +-1 walk has H1 = -1 always and P(T1 > n) ~ n^(-1/2)."""
    meas = StepMeasure(
        x=0.0,
        y=1.0,
        M=1,
        K=1,
        q_values=np.array([1, 0, -1]),
        weights=np.array([0.5, 0.0, 0.5]),
        tail_mass=0.0,
        tail_exponent=None,
        tail_geometric=None,
        tail_drift=0.0,
        atoms=None,
    )
    rep = ladder_tails_mc(meas, 100_000, rng, t_cap=1 << 12)
    assert 0.4 < rep.t1_exponent < 0.6
    assert rep.t1_survival[1] > 0.4  # P(T1 > 1) = 1/2


# ---------------------------------------------------------------------------
# Sandwich bound (small window; acceptance runs the full one).
# ---------------------------------------------------------------------------


def test_sandwich_small_window(planar, crit_ev, crit_measure):
    rep = sandwich_check(planar, crit_ev, crit_measure, p_max=60)
    assert rep.passed
    assert np.all(rep.lower[planar.K : 61] <= rep.upper[planar.K : 61] * (1 + 1e-9))


def test_key_formula_mc_smoke(planar, crit_ev, crit_tilt, rng):
    y, _ = crit_tilt
    mc = key_formula_mc(planar, crit_ev, y, p=50, t=10, samples=5_000, rng=rng)
    assert mc.compatible
