"""Critical points and decay exponents from coefficient and flux tables.

Everything here is ratio analysis: for a_n ~ C rho^{-n} n^{-alpha} the
consecutive ratios satisfy a_n/a_{n-1} = rho^{-1} (1 - alpha/n + O(1/n^2)),
so a linear fit of ratios against 1/n (Domb-Sykes) recovers the radius and
the polynomial exponent at once, with the exponential factor removed
exactly.  The same device applied to the flux direction W_p/W_{p+1} gives
the y-radius and the flux decay exponent beta.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .solver import NumericEvaluation, PartitionSolution, evaluate
from .model import WeightFunction


@dataclass
class FitResult:
    """A fitted scalar with its least-squares standard error."""

    value: float
    stderr: float
    window: Tuple[int, int]
    r_squared: float = float("nan")
    diagnostics: Dict[str, object] = field(default_factory=dict)

    def __float__(self) -> float:
        return self.value

    def agrees(self, other: "FitResult", sigmas: float = 3.0) -> bool:
        combined = math.hypot(self.stderr, other.stderr)
        return abs(self.value - other.value) <= sigmas * max(combined, 1e-15)


@dataclass
class CriticalEstimate:
    """Bundle of critical-point and exponent estimates for one model."""

    x_cr_lo: float
    x_cr_hi: float
    method: str  # "ratio-extrapolation" | "bisection"
    y_cr: Optional[FitResult] = None
    beta: Optional[FitResult] = None
    alpha: Optional[FitResult] = None
    diagnostics: Dict[str, object] = field(default_factory=dict)

    @property
    def gamma(self) -> Optional[float]:
        if self.beta is None:
            return None
        return min(self.beta.value - 1.0, 2.0)

    @property
    def x_cr(self) -> float:
        return 0.5 * (self.x_cr_lo + self.x_cr_hi)

    def to_dict(self) -> dict:
        out = {
            "x_cr_lo": self.x_cr_lo,
            "x_cr_hi": self.x_cr_hi,
            "method": self.method,
            "gamma": self.gamma,
            "diagnostics": {k: str(v) for k, v in self.diagnostics.items()},
        }
        for name in ("y_cr", "beta", "alpha"):
            fit = getattr(self, name)
            if fit is not None:
                out[name] = {
                    "value": fit.value,
                    "stderr": fit.stderr,
                    "window": list(fit.window),
                }
        return out


@dataclass
class TildeTable:
    """log of W~_p = y^p W_p (and pointed companions) over 0..P_max.

    ``window`` marks the flux range treated as reliable for exponent
    fitting: below it the asymptotic regime has not set in, above it the
    flux truncation of the underlying evaluation biases the values.
    """

    log_tilde: np.ndarray
    window: Tuple[int, int]
    y: float
    log_tilde_pointed_k: Optional[np.ndarray] = None
    log_tilde_pointed_vertex: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        lo, hi = self.window
        if hi - lo < 2:
            raise ValueError("empty reliable window")
        vals = self.log_tilde[lo:hi]
        if not np.all(np.isfinite(vals)):
            raise ValueError("W~ vanishes or overflows inside the window")

    @property
    def p_max(self) -> int:
        return len(self.log_tilde) - 1

    def values(self) -> np.ndarray:
        return np.exp(self.log_tilde - np.nanmax(self.log_tilde))

    @classmethod
    def from_evaluation(
        cls,
        ev: NumericEvaluation,
        y: float,
        window: Optional[Tuple[int, int]] = None,
    ) -> "TildeTable":
        if not ev.converged:
            raise ValueError("evaluation did not converge")
        P = ev.P_max
        if window is None:
            # discard the pre-asymptotic head and the truncation-biased tail
            window = (max(16, P // 20), max(48, P // 4))
        idx = np.arange(P + 1)
        lt = ev.log_w() + idx * math.log(y)
        kw: Dict[str, np.ndarray] = {}
        if ev.pointed_k_mp is not None:
            kw["log_tilde_pointed_k"] = ev.log_pointed_k() + idx * math.log(y)
        if ev.pointed_vertex_mp is not None:
            kw["log_tilde_pointed_vertex"] = (
                ev.log_pointed_vertex() + idx * math.log(y)
            )
        return cls(log_tilde=lt, window=window, y=y, **kw)


def _linear_fit(xs: np.ndarray, ys: np.ndarray) -> Tuple[float, float, float, float, float]:
    """Least-squares line ys = a + b xs; returns (a, b, se_a, se_b, R^2)."""
    A = np.vstack([np.ones_like(xs), xs]).T
    coef, res, *_ = np.linalg.lstsq(A, ys, rcond=None)
    fitted = A @ coef
    dof = max(len(xs) - 2, 1)
    s2 = float(np.sum((ys - fitted) ** 2)) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - float(np.sum((ys - fitted) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return (
        float(coef[0]),
        float(coef[1]),
        math.sqrt(max(cov[0, 0], 0.0)),
        math.sqrt(max(cov[1, 1], 0.0)),
        r2,
    )


def domb_sykes(
    coeffs: Sequence,
    window: Optional[Tuple[int, int]] = None,
    degree: int = 3,
) -> Tuple[FitResult, FitResult]:
    """Fit r_n = a_n/a_{n-1} against powers of 1/n.

    Returns (radius_inverse, alpha): the intercept estimates 1/x_cr and
    -(1/n coefficient)/intercept estimates the polynomial decay exponent
    alpha.  A first-degree fit carries an O(1/n^2) bias in the intercept;
    degree 3 removes enough of it that 200 coefficients locate the radius
    to a few parts in 10^7 on the bundled models.
    """
    n_max = len(coeffs) - 1
    if window is None:
        window = (max(2, n_max // 5), n_max)  # drop the first 20%
    lo, hi = window
    ns, rs = [], []
    signs = set()
    for n in range(1, n_max + 1):
        if coeffs[n] != 0:
            signs.add(coeffs[n] > 0)
    for n in range(max(lo, 2), hi + 1):
        if coeffs[n - 1] == 0:
            continue
        ns.append(n)
        # divide exactly first: the coefficients themselves can overflow
        # a float long before their ratios do
        rs.append(float(Fraction(coeffs[n]) / Fraction(coeffs[n - 1])))
    diagnostics: Dict[str, object] = {}
    if len(signs) > 1 or any(r <= 0 for r in rs):
        diagnostics["inconclusive"] = True
        diagnostics["reason"] = "coefficient signs oscillate"
    if len(ns) < 8:
        raise ValueError("need at least 8 usable ratios for a Domb-Sykes fit")
    ns_arr = np.array(ns, dtype=float)
    rs_arr = np.array(rs, dtype=float)
    deg = max(1, min(int(degree), len(ns) // 8))
    A = np.vstack([ns_arr ** (-j) for j in range(deg + 1)]).T
    coef, res_arr, _, _ = np.linalg.lstsq(A, rs_arr, rcond=None)
    fitted = A @ coef
    resid = rs_arr - fitted
    dof = max(1, len(ns) - (deg + 1))
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(A.T @ A)
    ss_tot = float(((rs_arr - rs_arr.mean()) ** 2).sum()) or 1.0
    r2 = 1.0 - float(resid @ resid) / ss_tot
    a, b = float(coef[0]), float(coef[1])
    se_a, se_b = math.sqrt(cov[0, 0]), math.sqrt(cov[1, 1])
    diagnostics["degree"] = deg
    inv_radius = FitResult(a, se_a, window, r2, dict(diagnostics))
    # alpha = -(1/n coefficient)/intercept; first-order error propagation
    alpha = -b / a
    se_alpha = abs(alpha) * math.hypot(se_b / abs(b) if b != 0 else 0.0, se_a / abs(a))
    return inv_radius, FitResult(alpha, se_alpha, window, r2, dict(diagnostics))


def estimate_x_cr(
    coeffs: Optional[Sequence] = None,
    *,
    model: Optional[WeightFunction] = None,
    method: str = "ratio",
    P_max: int = 200,
    x_hi: float = 1.0,
    bisect_tol: float = 1e-4,
    window: Optional[Tuple[int, int]] = None,
) -> CriticalEstimate:
    """Critical x, by coefficient-ratio extrapolation or by bisection.

    The ratio method needs exact low-order coefficients of W_0 (>= 50 for a
    stable fit).  The bisection method brackets the convergence/divergence
    boundary of the truncated fixed-point system; truncation removes trees,
    so the bracket sits at or above the untruncated critical point.
    """
    if method == "ratio":
        if coeffs is None:
            raise ValueError("ratio method needs coefficients")
        if len(coeffs) < 50:
            raise ValueError("need at least 50 coefficients")
        inv_radius, alpha = domb_sykes(coeffs, window)
        x_cr = 1.0 / inv_radius.value
        half = inv_radius.stderr / inv_radius.value * x_cr
        # The statistical stderr of the polynomial-in-1/n fit badly
        # underestimates the truncation bias of the model itself, so add
        # the shift between consecutive fit degrees as a systematic term.
        lower, _ = domb_sykes(coeffs, window, degree=2)
        systematic = abs(1.0 / lower.value - x_cr)
        half = 3 * half + systematic
        est = CriticalEstimate(
            x_cr_lo=x_cr - half,
            x_cr_hi=x_cr + half,
            method="ratio-extrapolation",
            alpha=alpha,
            diagnostics=dict(inv_radius.diagnostics),
        )
        return est
    if method != "bisection":
        raise ValueError(f"unknown method {method!r}")
    if model is None:
        raise ValueError("bisection needs a model")
    lo, hi = 0.0, float(x_hi)
    # expand upward until divergence
    for _ in range(60):
        if evaluate(model, Fraction(hi).limit_denominator(10**12), P_max).diverged:
            break
        lo, hi = hi, 2 * hi
    else:
        raise ValueError("no divergence found while expanding the bracket")
    while hi - lo > bisect_tol:
        mid = 0.5 * (lo + hi)
        x_mid = Fraction(mid).limit_denominator(10**12)
        if evaluate(model, x_mid, P_max).diverged:
            hi = mid
        else:
            lo = mid
    return CriticalEstimate(x_cr_lo=lo, x_cr_hi=hi, method="bisection")


def estimate_y_cr(
    ev: NumericEvaluation,
    wf: Optional[WeightFunction] = None,
    window: Optional[Tuple[int, int]] = None,
    cross_check: bool = True,
) -> FitResult:
    """Limiting ratio W_p/W_{p+1} by Richardson extrapolation.

    With r_p = y (1 + beta/p + O(1/p^2)), the first Richardson transform
    R_p = p r_p - (p-1) r_{p-1} removes the 1/p term; its spread over the
    window is the error estimate.  When a model is supplied the result is
    cross-checked against the mass-normalization method (the y at which
    the splitting measure has total mass one).
    """
    if not ev.converged:
        raise ValueError("evaluation did not converge")
    P = ev.P_max
    if P < 200:
        raise ValueError("need P_max >= 200")
    if window is None:
        window = (P // 4, P // 2)
    lo, hi = window
    logw = ev.log_w()
    if not np.all(np.isfinite(logw[lo : hi + 2])):
        raise ValueError("W_p vanishes inside the fitting window")
    p = np.arange(lo, hi + 1)
    r = np.exp(logw[p] - logw[p + 1])
    rich = p[1:] * r[1:] - p[:-1] * r[:-1]
    value = float(np.mean(rich[len(rich) // 2 :]))
    spread = float(np.std(rich[len(rich) // 2 :]))
    stderr = max(spread, abs(rich[-1] - rich[len(rich) // 2]))
    diagnostics: Dict[str, object] = {"raw_ratio_last": float(r[-1])}
    if cross_check and wf is not None:
        from .measure import mass_normalization_y

        y_mass = mass_normalization_y(wf, ev, value)
        diagnostics["mass_normalization"] = y_mass
        if abs(y_mass - value) > 3 * max(stderr, 1e-4 * value):
            warnings.warn(
                "mass-normalization y disagrees with the ratio limit: "
                f"{y_mass:.6g} vs {value:.6g}",
                stacklevel=2,
            )
            diagnostics["cross_check_agrees"] = False
        else:
            diagnostics["cross_check_agrees"] = True
    return FitResult(value, stderr, window, diagnostics=diagnostics)


def fit_beta(tilde: TildeTable) -> FitResult:
    """Flux decay exponent from log-ratios of W~.

    log(W~_p / W~_{p+1}) = const + beta log((p+1)/p): a linear fit in
    log((p+1)/p) ~ 1/p; the intercept absorbs any residual error in the
    y used to build the table.
    """
    lo, hi = tilde.window
    if hi - lo < 100:
        raise ValueError("reliable window shorter than 100 fluxes")
    p = np.arange(lo, hi)
    lr = tilde.log_tilde[p] - tilde.log_tilde[p + 1]
    xs = np.log((p + 1.0) / p)
    a, b, se_a, se_b, r2 = _linear_fit(xs, lr)
    diagnostics: Dict[str, object] = {}
    if r2 < 0.98:
        diagnostics["non_polynomial_residuals"] = True
    return FitResult(b, se_b, (lo, hi), r2, diagnostics)


def fit_alpha(
    coeffs: Sequence, window: Optional[Tuple[int, int]] = None
) -> FitResult:
    """Coefficient decay exponent alpha via the Domb-Sykes slope."""
    if len(coeffs) < 200:
        raise ValueError("need at least 200 coefficients")
    _, alpha = domb_sykes(coeffs, window)
    return alpha


def w0_coefficients(solution: PartitionSolution) -> List[Fraction]:
    """[x^n] W_0 for n = 0..N from an exact solution table."""
    return [Fraction(0)] + [
        solution.coefficient(n, 0) for n in range(1, solution.N + 1)
    ]
