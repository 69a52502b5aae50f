"""Session-scoped fixtures shared by the unit and acceptance tests.

The exact solves and high-precision evaluations dominate the runtime of
the suite, so each is computed once per session and reused everywhere.
"""

from fractions import Fraction

import numpy as np
import pytest

from parkflux.measure import critical_tilt, nu
from parkflux.model import planar_map_model, unit_spot_model
from parkflux.solver import compute_coefficients, evaluate


@pytest.fixture(scope="session")
def planar():
    return planar_map_model()


@pytest.fixture(scope="session")
def unit():
    return unit_spot_model()


@pytest.fixture(scope="session")
def planar_sol(planar):
    """Exact coefficient table to order 400 (planar-map model)."""
    return compute_coefficients(planar, 400)


@pytest.fixture(scope="session")
def unit_sol(unit):
    """Exact coefficient table to order 400 (unit-spot parking model)."""
    return compute_coefficients(unit, 400)


@pytest.fixture(scope="session")
def crit_ev(planar):
    """256-bit evaluation at the exact critical point x = 1/12, P = 2000."""
    return evaluate(
        planar, Fraction(1, 12), P_max=2000, precision=256, pointed=True
    )


@pytest.fixture(scope="session")
def subcrit_ev(planar):
    """Subcritical evaluation at x = 1/24, P = 2000."""
    return evaluate(
        planar, Fraction(1, 24), P_max=2000, precision=256, pointed=True
    )


@pytest.fixture(scope="session")
def crit_tilt(planar, crit_ev):
    """(y, mass) of the mass-minimizing tilt at criticality."""
    return critical_tilt(planar, crit_ev)


@pytest.fixture(scope="session")
def crit_measure(planar, crit_ev, crit_tilt):
    """Critical step measure on a depth-1000 window (half of P_max, so the
    deep tail is not contaminated by the flux truncation boundary)."""
    y, _ = crit_tilt
    return nu(planar, crit_ev, y, 1000, build_atoms=False)


@pytest.fixture(scope="session")
def subcrit_measure(planar, subcrit_ev):
    y, _ = critical_tilt(planar, subcrit_ev)
    return nu(planar, subcrit_ev, y, 1000, build_atoms=False)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260826)
