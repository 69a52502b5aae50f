"""Coefficient and flux-decay exponent extraction."""

import math
from fractions import Fraction

import numpy as np
import pytest

from parkflux.asymptotics import (
    TildeTable,
    domb_sykes,
    estimate_x_cr,
    estimate_y_cr,
    fit_alpha,
    fit_beta,
    w0_coefficients,
)


def _synthetic_coeffs(rho_inv: float, alpha: float, n_max: int):
    return [0.0] + [rho_inv**n * n ** (-alpha) for n in range(1, n_max + 1)]


def test_domb_sykes_on_synthetic_series():
    coeffs = _synthetic_coeffs(12.0, 1.5, 400)
    inv_radius, alpha = domb_sykes(coeffs)
    assert float(inv_radius) == pytest.approx(12.0, rel=1e-6)
    assert float(alpha) == pytest.approx(1.5, abs=0.05)


def test_fit_alpha_synthetic_independent_of_radius():
    for rho_inv in (2.0, 12.0):
        coeffs = _synthetic_coeffs(rho_inv, 2.5, 400)
        assert float(fit_alpha(coeffs)) == pytest.approx(2.5, abs=0.05)


def test_x_cr_bisection_brackets_ratio_estimate(planar, planar_sol):
    ratio = estimate_x_cr(w0_coefficients(planar_sol))
    bis = estimate_x_cr(model=planar, method="bisection", P_max=200)
    assert bis.x_cr_lo <= ratio.x_cr * (1 + 1e-3)
    assert ratio.x_cr == pytest.approx(1.0 / 12.0, abs=1e-5)


def test_y_cr_two_methods_agree(planar, crit_ev):
    from parkflux.measure import critical_tilt

    fit = estimate_y_cr(crit_ev, planar)
    y_mass, _ = critical_tilt(planar, crit_ev)
    assert float(fit) == pytest.approx(y_mass, abs=5e-4)


def test_fit_beta_synthetic():
    p = np.arange(0, 1500)
    y = 0.3
    log_tilde = np.zeros(1500)
    log_tilde[1:] = -2.5 * np.log(p[1:])  # exact power law, tilt removed
    table = TildeTable(log_tilde=log_tilde, window=(100, 1200), y=y)
    assert float(fit_beta(table)) == pytest.approx(2.5, abs=1e-3)


def test_fit_beta_rejects_short_window():
    table = TildeTable(log_tilde=np.zeros(200), window=(50, 100), y=0.3)
    with pytest.raises(ValueError):
        fit_beta(table)
