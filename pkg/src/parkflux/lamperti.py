"""Levy-Khintchine exponents of the logarithm of the scaling limit.

The locally largest branch, rescaled, converges to a positive self-similar
Markov process; writing it in exponential scale (the Lamperti transform)
turns it into a Levy process ``zeta`` with jumps supported on
``[-log 2, 0]`` after conditioning the branch to stay locally largest.
The martingale identity satisfied by the rescaled partition function forces

    psi(beta) = 0,

where ``psi`` is the Levy-Khintchine exponent of ``exp(-beta * zeta)``
restricted to jumps of size at least ``-log 2``.  Two branches arise:

* ``subordinator`` for beta in (1, 2): the underlying stable process has
  index gamma = beta - 1 in (0, 1), the Lamperti image is a killed
  subordinator-like pure-jump process and no compensation is needed.
* ``compensated`` for beta in (2, 3): gamma = beta - 1 in (1, 2), the jumps
  must be compensated and a drift term appears.

This module evaluates both exponents by Gauss-Jacobi quadrature with the
endpoint singularity ``(1 - x)**-beta`` absorbed into the weight, certifies
the unique roots 3/2 and 5/2 by sign-scan plus Brent refinement, and checks
the quadrature machinery against the closed form

    psi_dagger(z) = Gamma(1 + z) / Gamma(2 - beta + z)

valid for the *unrestricted* compensated exponent.  It also verifies that
the exponentially tilted Levy density is proportional to the jump densities
of the Brownian fragmentation (beta = 3/2) and Brownian growth-fragmentation
(beta = 5/2) trees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate
from scipy.special import digamma as _scipy_digamma
from scipy.special import roots_jacobi

EULER_GAMMA = float(np.euler_gamma)

__all__ = [
    "PsiEvaluation",
    "RootCertificate",
    "real_gamma",
    "real_digamma",
    "gamma_reflection_error",
    "digamma_reflection_error",
    "psi_subordinator",
    "psi_compensated",
    "psi_unrestricted",
    "lk_closed_form",
    "lk_closed_form_check",
    "find_root",
    "tilt_proportionality",
]


# ---------------------------------------------------------------------------
# Special functions on the real line, including negative non-integers.
# ---------------------------------------------------------------------------


def real_gamma(z: float) -> float:
    """Gamma function for real ``z``, negative non-integers via reflection.

    For ``z >= 0.5`` this defers to :func:`math.gamma`; below that the
    reflection formula ``Gamma(z) Gamma(1-z) = pi / sin(pi z)`` is used so
    that the subtraction happens in the well-conditioned right half-line.
    """
    if z >= 0.5:
        return math.gamma(z)
    if z == math.floor(z):
        raise ValueError(f"gamma pole at non-positive integer {z}")
    return math.pi / (math.sin(math.pi * z) * math.gamma(1.0 - z))


def real_digamma(z: float) -> float:
    """Digamma for real ``z``; reflection below 1/2 keeps arguments positive."""
    if z >= 0.5:
        return float(_scipy_digamma(z))
    if z == math.floor(z):
        raise ValueError(f"digamma pole at non-positive integer {z}")
    return float(_scipy_digamma(1.0 - z)) - math.pi / math.tan(math.pi * z)


def gamma_reflection_error(z: float) -> float:
    """|Gamma(z) Gamma(1-z) - pi/sin(pi z)| -- self-test of the wrapper."""
    lhs = real_gamma(z) * real_gamma(1.0 - z)
    rhs = math.pi / math.sin(math.pi * z)
    return abs(lhs - rhs) / abs(rhs)


def digamma_reflection_error(z: float) -> float:
    """|digamma(1-z) - digamma(z) - pi cot(pi z)| -- self-test of the wrapper."""
    lhs = real_digamma(1.0 - z) - real_digamma(z)
    rhs = math.pi / math.tan(math.pi * z)
    return abs(lhs - rhs) / max(abs(rhs), 1.0)


# ---------------------------------------------------------------------------
# Exponent evaluations.
# ---------------------------------------------------------------------------


@dataclass
class PsiEvaluation:
    """One evaluation of a Levy-Khintchine exponent.

    ``error`` is a node-doubling estimate: the quadrature is evaluated at
    ``nodes`` and ``2 * nodes`` Gauss-Jacobi points and the difference is
    reported.  ``integral`` is the jump part, ``killing`` the killing rate
    contribution (with its sign as it enters ``value``), ``drift`` likewise.
    """

    beta: float
    branch: str
    value: float
    error: float
    integral: float
    killing: float
    drift: float

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "branch": self.branch,
            "value": self.value,
            "error": self.error,
            "integral": self.integral,
            "killing": self.killing,
            "drift": self.drift,
        }


def _jacobi_upper_integral(
    beta: float, g: Callable[[np.ndarray], np.ndarray], power: float, nodes: int
) -> float:
    """integral over (1/2, 1) of (1 - x)**(power) * g(x) dx.

    ``power`` is ``1 - beta`` (subordinator bracket vanishes linearly at 1)
    or ``2 - beta`` (compensated bracket vanishes quadratically); both exceed
    -1 on the admissible beta ranges so Gauss-Jacobi applies with the
    singular factor absorbed in the weight (1 - t)**power of the rule.
    """
    t, w = roots_jacobi(nodes, power, 0.0)
    x = (3.0 + t) / 4.0  # map [-1, 1] -> [1/2, 1]; 1 - x = (1 - t)/4
    scale = 0.25 ** (power + 1.0)
    return scale * float(np.dot(w, g(x)))


def psi_subordinator(beta: float, tol: float = 1e-10, nodes: int = 96) -> PsiEvaluation:
    """Exponent of the restricted pure-jump branch, beta in (1, 2).

    psi(beta) = integral over (0,1) of
                  [-1/Gamma(1-beta)] (1-x)**(-beta) (x**(-beta) 1_{x>1/2} - 1) dx
                - 1/Gamma(2-beta).

    The (0, 1/2) part, where the bracket is the constant -1, integrates in
    closed form to (1 - 2**(beta-1))/(beta-1) before the Levy-measure
    constant; the (1/2, 1) part has bracket ~ beta (1 - x) near 1, so
    dividing it out leaves a smooth integrand under the Jacobi weight
    (1 - x)**(1 - beta).
    """
    if not 1.0 < beta < 2.0:
        raise ValueError(f"subordinator branch needs beta in (1, 2), got {beta}")
    const = -1.0 / real_gamma(1.0 - beta)
    lower = (1.0 - 2.0 ** (beta - 1.0)) / (beta - 1.0)

    def g(x: np.ndarray) -> np.ndarray:
        return (x ** (-beta) - 1.0) / (1.0 - x)

    upper = _jacobi_upper_integral(beta, g, 1.0 - beta, nodes)
    upper2 = _jacobi_upper_integral(beta, g, 1.0 - beta, 2 * nodes)
    integral = const * (lower + upper2)
    err = abs(const) * abs(upper2 - upper)
    killing = -1.0 / real_gamma(2.0 - beta)
    if err > tol:
        raise ValueError(f"quadrature error {err:.3e} exceeds tol {tol:.3e}")
    return PsiEvaluation(
        beta=beta,
        branch="subordinator",
        value=integral + killing,
        error=err,
        integral=integral,
        killing=killing,
        drift=0.0,
    )


def _compensated_pieces(
    beta: float, z: float, restricted: bool, nodes: int
) -> Tuple[float, float, float, float]:
    """(integral, killing, drift) terms of the compensated exponent at ``z``.

    The jump part is
        integral over (0,1) of c_beta (1-x)**(-beta) (x**z - 1 - z log x) dx
    with the restriction ``x > 1/2`` applied to the ``x**z`` term when
    ``restricted`` (the root equation keeps only jumps >= -log 2).  Killing
    enters as -k_beta; the drift coefficient is derived below.  Returns the
    signed contributions plus the quadrature error at the given node count.
    """
    c = -real_gamma(beta) * math.sin((beta - 1.0) * math.pi) / math.pi

    def bracket_lower(x: np.ndarray) -> np.ndarray:
        jump = 0.0 if restricted else x ** z
        return (jump - 1.0 - z * np.log(x)) / (1.0 - x) ** beta

    # (0, 1/2): only a logarithmic endpoint singularity at 0 -- adaptive
    # quadrature resolves it directly.
    lower, lower_err = integrate.quad(
        bracket_lower, 0.0, 0.5, limit=400, epsabs=1e-13, epsrel=1e-13
    )

    def g(x: np.ndarray) -> np.ndarray:
        return (x ** z - 1.0 - z * np.log(x)) / (1.0 - x) ** 2

    upper = _jacobi_upper_integral(beta, g, 2.0 - beta, nodes)
    upper2 = _jacobi_upper_integral(beta, g, 2.0 - beta, 2 * nodes)
    integral = c * (lower + upper2)
    err = abs(c) * (abs(upper2 - upper) + abs(lower_err))

    killing = -(beta - 2.0) / real_gamma(3.0 - beta)
    # Drift coefficient b = -(gamma_E + digamma(2-beta)) / Gamma(2-beta).
    # This is pinned by the closed form Gamma(1+z)/Gamma(2-beta+z): its value
    # at z = 0 fixes the killing rate and its slope at z = 0 fixes b (the
    # compensated jump integral has vanishing derivative at z = 0).
    b = -(EULER_GAMMA + real_digamma(2.0 - beta)) / real_gamma(2.0 - beta)
    drift = z * b
    return integral, killing, drift, err


def psi_compensated(beta: float, tol: float = 1e-9, nodes: int = 96) -> PsiEvaluation:
    """Exponent of the restricted compensated branch, beta in (2, 3).

    psi(beta) = integral of pi_beta(dx) (x**(-beta) 1_{x>1/2} - 1 + beta log x)
                - k_beta - beta * b_beta

    with Levy density pi_beta(dx) = [-Gamma(beta) sin((beta-1) pi)/pi]
    (1-x)**(-beta) dx, killing rate k_beta = (beta-2)/Gamma(3-beta) and drift
    coefficient b_beta = -(gamma_E + digamma(2-beta))/Gamma(2-beta), the
    latter pinned by the Gamma-ratio closed form (see lk_closed_form_check).
    This is the unrestricted exponent evaluated at ``z = -beta`` with the
    small jumps (x <= 1/2) removed from the uncompensated term.
    """
    if not 2.0 < beta < 3.0:
        raise ValueError(f"compensated branch needs beta in (2, 3), got {beta}")
    integral, killing, drift, err = _compensated_pieces(beta, -beta, True, nodes)
    if err > tol:
        raise ValueError(f"quadrature error {err:.3e} exceeds tol {tol:.3e}")
    return PsiEvaluation(
        beta=beta,
        branch="compensated",
        value=integral + killing + drift,
        error=err,
        integral=integral,
        killing=killing,
        drift=drift,
    )


def psi_unrestricted(beta: float, z: float, nodes: int = 96) -> PsiEvaluation:
    """Unrestricted compensated exponent psi_dagger(z) (no jump cutoff)."""
    if not 2.0 < beta < 3.0:
        raise ValueError(f"compensated branch needs beta in (2, 3), got {beta}")
    integral, killing, drift, err = _compensated_pieces(beta, z, False, nodes)
    return PsiEvaluation(
        beta=beta,
        branch="unrestricted",
        value=integral + killing + drift,
        error=err,
        integral=integral,
        killing=killing,
        drift=drift,
    )


def lk_closed_form(beta: float, z: float) -> float:
    """Closed form Gamma(1+z)/Gamma(2-beta+z) of the unrestricted exponent.

    Written with the reciprocal gamma so that poles of the denominator give
    an honest zero instead of an error.
    """
    from scipy.special import rgamma

    return real_gamma(1.0 + z) * float(rgamma(2.0 - beta + z))


def lk_closed_form_check(beta: float, z: float, tol: float = 1e-8) -> dict:
    """Compare quadrature psi_dagger(z) against its Gamma-ratio closed form."""
    quad_value = psi_unrestricted(beta, z).value
    closed = lk_closed_form(beta, z)
    diff = abs(quad_value - closed)
    return {
        "beta": beta,
        "z": z,
        "quadrature": quad_value,
        "closed_form": closed,
        "difference": diff,
        "tolerance": tol,
        "pass": diff < tol,
    }


# ---------------------------------------------------------------------------
# Root certification.
# ---------------------------------------------------------------------------


@dataclass
class RootCertificate:
    """Sign-scan certificate for a unique root of psi on one branch.

    ``scan`` holds (beta, psi(beta)) at grid resolution ``grid_step``;
    uniqueness is certified at that resolution only (exactly one sign change
    along the grid), then the bracketing interval is refined by Brent's
    method to ``tolerance``.
    """

    branch: str
    bracket: Tuple[float, float]
    root: float
    tolerance: float
    psi_at_root: float
    grid_step: float
    scan: List[Tuple[float, float]] = field(repr=False, default_factory=list)

    def to_dict(self) -> dict:
        return {
            "branch": self.branch,
            "bracket": list(self.bracket),
            "root": self.root,
            "tolerance": self.tolerance,
            "psi_at_root": self.psi_at_root,
            "grid_step": self.grid_step,
            "sign_changes": 1,
        }


def find_root(
    branch: str,
    tol: float = 1e-9,
    grid_step: float = 1e-3,
    interval: Optional[Tuple[float, float]] = None,
    psi: Optional[Callable[[float], float]] = None,
    scan_nodes: int = 32,
) -> RootCertificate:
    """Certify the unique root of psi on a branch.

    A sign scan at ``grid_step`` resolution (coarse quadrature, ``scan_nodes``
    points) must find exactly one sign change; the bracketing pair is then
    refined with full-accuracy evaluations by Brent's method.  ``psi`` may be
    supplied directly to test the harness itself.
    """
    from scipy.optimize import brentq

    if psi is None:
        if branch == "subordinator":
            interval = interval or (1.05, 1.95)
            scan_f = lambda b: psi_subordinator(b, tol=1.0, nodes=scan_nodes).value
            fine_f = lambda b: psi_subordinator(b, tol=1e-8).value
        elif branch == "compensated":
            interval = interval or (2.05, 2.95)
            scan_f = lambda b: psi_compensated(b, tol=1.0, nodes=scan_nodes).value
            fine_f = lambda b: psi_compensated(b, tol=1e-7).value
        else:
            raise ValueError(f"unknown branch {branch!r}")
    else:
        if interval is None:
            raise ValueError("custom psi requires an explicit interval")
        scan_f = fine_f = psi

    a, b = interval
    grid = np.arange(a, b + grid_step / 2.0, grid_step)
    values = [scan_f(float(x)) for x in grid]
    changes = [
        i
        for i in range(len(values) - 1)
        if values[i] == 0.0 or (values[i] < 0.0) != (values[i + 1] < 0.0)
    ]
    if len(changes) != 1:
        raise ValueError(
            f"expected exactly one sign change on {branch} branch, found {len(changes)}"
        )
    i = changes[0]
    # The coarse scan can misplace the bracket by one cell when the root sits
    # near a grid point (psi is then at quadrature-noise level); widen by one
    # step on each side and re-bracket with full-accuracy evaluations.
    lo = float(max(grid[max(i - 1, 0)], a))
    hi = float(min(grid[min(i + 2, len(grid) - 1)], b))
    pts = np.linspace(lo, hi, 7)
    fine = [fine_f(float(x)) for x in pts]
    for j in range(len(pts) - 1):
        if fine[j] == 0.0:
            lo = hi = float(pts[j])
            break
        if (fine[j] < 0.0) != (fine[j + 1] < 0.0):
            lo, hi = float(pts[j]), float(pts[j + 1])
            break
    else:
        raise ValueError("sign change not confirmed at full accuracy")
    root = lo if lo == hi else float(brentq(fine_f, lo, hi, xtol=tol))
    return RootCertificate(
        branch=branch,
        bracket=(lo, hi),
        root=root,
        tolerance=tol,
        psi_at_root=fine_f(root),
        grid_step=grid_step,
        scan=[(float(x), float(v)) for x, v in zip(grid, values)],
    )


# ---------------------------------------------------------------------------
# Tilt proportionality.
# ---------------------------------------------------------------------------


def tilt_proportionality(
    beta: float, grid: Optional[Sequence[float]] = None, tol: float = 1e-10
) -> dict:
    """Check x**(-beta) * (Levy density) proportional to (x (1-x))**(-beta).

    The exponential tilt by exp(-beta zeta) multiplies the jump density by
    x**(-beta); the result should match (up to one multiplicative constant)
    the jump density of the limiting fragmentation tree, which is
    proportional to (x (1 - x))**(-beta) on (1/2, 1).  Reports the constant
    and the relative variation of the pointwise ratio across the grid.
    """
    if grid is None:
        grid = np.linspace(0.55, 0.95, 81)
    xs = np.asarray(grid, dtype=float)
    if np.any(xs <= 0.5) or np.any(xs >= 1.0):
        raise ValueError("grid must lie strictly inside (1/2, 1)")
    if 1.0 < beta < 2.0:
        levy_const = -1.0 / real_gamma(1.0 - beta)
    elif 2.0 < beta < 3.0:
        levy_const = -real_gamma(beta) * math.sin((beta - 1.0) * math.pi) / math.pi
    else:
        raise ValueError(f"beta must lie in (1,2) or (2,3), got {beta}")
    tilted = xs ** (-beta) * levy_const * (1.0 - xs) ** (-beta)
    target = (xs * (1.0 - xs)) ** (-beta)
    ratio = tilted / target
    constant = float(ratio.mean())
    variation = float(np.max(np.abs(ratio - constant)) / abs(constant))
    return {
        "beta": beta,
        "constant": constant,
        "relative_variation": variation,
        "tolerance": tol,
        "pass": variation < tol,
    }
