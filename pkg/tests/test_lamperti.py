"""Levy-Khintchine exponents, root certificates and tilt proportionality."""

import math

import numpy as np
import pytest

from parkflux.lamperti import (
    digamma_reflection_error,
    find_root,
    gamma_reflection_error,
    lk_closed_form,
    lk_closed_form_check,
    psi_compensated,
    psi_subordinator,
    psi_unrestricted,
    real_digamma,
    real_gamma,
    tilt_proportionality,
)


def test_gamma_reflection_selftest():
    for z in (1.5, 2.5, 0.3, -0.7, -1.3):
        assert gamma_reflection_error(z) < 1e-12


def test_digamma_reflection_selftest():
    for z in (0.3, -0.5, -1.7, 0.9):
        assert digamma_reflection_error(z) < 1e-12


def test_gamma_matches_known_values():
    assert real_gamma(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-14)
    assert real_gamma(-0.5) == pytest.approx(-2 * math.sqrt(math.pi), rel=1e-14)
    assert real_gamma(5.0) == 24.0


def test_gamma_pole_raises():
    with pytest.raises(ValueError):
        real_gamma(-2.0)
    with pytest.raises(ValueError):
        real_digamma(0.0)


def test_psi_branch_domains():
    with pytest.raises(ValueError):
        psi_subordinator(2.5)
    with pytest.raises(ValueError):
        psi_compensated(1.5)


def test_psi_subordinator_root_value():
    assert abs(psi_subordinator(1.5).value) < 1e-8


def test_psi_compensated_root_value():
    assert abs(psi_compensated(2.5).value) < 1e-8


def test_quadrature_error_decreases_with_nodes():
    coarse = psi_subordinator(1.7, tol=1.0, nodes=16)
    fine = psi_subordinator(1.7, tol=1.0, nodes=96)
    assert fine.error <= coarse.error
    assert abs(fine.value - coarse.value) <= max(coarse.error * 10, 1e-12)


def test_closed_form_oracle():
    # beta = 2.5, z = 1: Gamma(2)/Gamma(0.5) = 1/sqrt(pi)
    assert lk_closed_form(2.5, 1.0) == pytest.approx(
        1.0 / math.sqrt(math.pi), abs=1e-14
    )
    for z in (0.5, 1.0, 1.5):
        assert lk_closed_form_check(2.5, z)["pass"]
    # degenerate point: both sides are the same formula
    r = lk_closed_form_check(2.5, 0.0)
    assert r["pass"] and r["difference"] < 1e-12


def test_closed_form_away_from_half_integers():
    """The quadrature tracks the Gamma-ratio closed form across the whole
    compensated branch, not just at the root."""
    for beta in (2.2, 2.7):
        for z in (0.8, 1.3):
            got = psi_unrestricted(beta, z).value
            want = lk_closed_form(beta, z)
            assert got == pytest.approx(want, abs=1e-7)


def test_find_root_certificates():
    sub = find_root("subordinator", tol=1e-9)
    assert abs(sub.root - 1.5) < 1e-6
    assert abs(sub.psi_at_root) < 1e-6
    comp = find_root("compensated", tol=1e-9)
    assert abs(comp.root - 2.5) < 1e-6
    # scan certifies a single sign change at grid resolution
    signs = [v < 0 for _, v in sub.scan if v != 0]
    assert sum(1 for a, b in zip(signs, signs[1:]) if a != b) == 1


def test_find_root_synthetic_harness():
    cert = find_root("synthetic", psi=lambda b: b - 1.7, interval=(1.0, 2.0))
    assert cert.root == pytest.approx(1.7, abs=1e-6)


def test_find_root_rejects_no_sign_change():
    with pytest.raises(ValueError):
        find_root("synthetic", psi=lambda b: b * b + 1.0, interval=(1.0, 2.0))


def test_tilt_proportionality():
    for beta in (1.5, 2.5):
        verdict = tilt_proportionality(beta)
        assert verdict["pass"]
        assert verdict["relative_variation"] < 1e-10
        assert verdict["constant"] > 0
