"""Offspring laws, the splitting step measure, and drift diagnostics.

Two probability objects live here.  The offspring law ``pi_p`` governs the
multitype branching description of a parked tree below a vertex of flux p:
an ordered tuple of child fluxes (p_1..p_k) has probability

    pi_p(p_1..p_k) = x * sum_{(c, s) admissible} w_{c,k,s}
                       * (prod_i W_{p_i}) / W_p,

the sum running over car counts c and ordered spot tuples s with
sum(p_i - s_i) + c = p and p_i >= s_i.  The splitting measure ``nu_hat``
is the step law of the associated random walk: an atom picks a vertex
entry with at least one child, designates the first child as the one the
walk continues through, and integrates the remaining (sibling) subtrees
against the tilted partition function W~_p = y^p W_p:

    nu_hat(q; c, (s_0..s_k), (p_1..p_k))
        = x * (k+1) * w * y^(c - sum s_i) * prod_{i>=1} W~_{p_i},

with increment q = sum s_i - c - sum p_i (so q <= s_0 <= K always).  The
arity factor (k+1) counts the possible positions of the continuing child
and is only correct for exchangeable weight tables; both bundled models
are exchangeable by construction.  At y equal to the tilt that
normalizes the total mass to 1, nu_hat is a probability measure and its
flux marginal nu drives every renewal and fluctuation computation
downstream.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import zeta

from .model import WeightFunction
from .solver import NumericEvaluation
from .trees import FluxHeadroomExceeded

__all__ = [
    "OffspringLaw",
    "OffspringTable",
    "StepMeasure",
    "DriftDiagnostic",
    "NuHatSampler",
    "offspring_law",
    "nu",
    "mass_normalization_y",
    "drift_diagnostic",
    "critical_tilt",
    "two_big_children_tail",
    "tree_step_law",
    "nu_hat_step_marginal",
    "step_law_tv_distance",
    "sample_volumes",
]


# ---------------------------------------------------------------------------
# shared numeric helpers
# ---------------------------------------------------------------------------


def _log_tilde(ev: NumericEvaluation, y: float) -> np.ndarray:
    """log W~_p = log W_p + p log y (NaN where W_p = 0)."""
    return ev.log_w() + np.arange(ev.P_max + 1) * math.log(y)


def _tilde(ev: NumericEvaluation, y: float) -> np.ndarray:
    lt = _log_tilde(ev, y)
    out = np.exp(lt)
    out[~np.isfinite(out)] = 0.0
    return out


def _compositions(total: int, parts: int):
    if parts == 0:
        if total == 0:
            yield ()
        return
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


# ---------------------------------------------------------------------------
# offspring law
# ---------------------------------------------------------------------------


@dataclass
class OffspringLaw:
    """Exact child-flux distribution below a vertex of flux ``p``."""

    p: int
    atoms: Dict[Tuple[int, ...], float]
    deficit: float  # 1 - (raw mass before normalization)

    def probability(self, children: Tuple[int, ...]) -> float:
        return self.atoms.get(tuple(children), 0.0)

    def total_mass(self) -> float:
        return float(sum(self.atoms.values()))


def offspring_law(
    wf: WeightFunction, ev: NumericEvaluation, p: int, normalize: bool = True
) -> OffspringLaw:
    """Enumerate pi_p exactly over the finite admissible set.

    Child-flux tuples satisfy sum p_i = p - c + sum s_i <= p + K^2, so the
    evaluation must extend at least that far.  The raw mass equals 1 up to
    the truncation and round-off of the underlying fixed point; the
    shortfall is reported as ``deficit`` and divided out by default so the
    atoms form an honest sampling distribution.
    """
    if p + wf.K * wf.K > ev.P_max:
        raise FluxHeadroomExceeded(
            f"flux {p} needs W up to {p + wf.K**2} > P_max={ev.P_max}"
        )
    lw = ev.log_w()
    xf = float(ev.x)
    atoms: Dict[Tuple[int, ...], float] = {}
    lwp = lw[p]
    if not np.isfinite(lwp):
        raise ValueError(f"W_{p} vanishes; offspring law undefined")
    for c, spots, w in wf.entries():
        k = len(spots)
        budget = p - c + sum(spots)
        if budget < sum(spots):
            continue
        for extra in _compositions(budget - sum(spots), k):
            children = tuple(s + e for s, e in zip(spots, extra))
            lsum = sum(lw[q] for q in children)
            if not np.isfinite(lsum):
                continue
            weight = float(w) * xf * math.exp(lsum - lwp)
            atoms[children] = atoms.get(children, 0.0) + weight
    mass = sum(atoms.values())
    deficit = 1.0 - mass
    if normalize and mass > 0:
        atoms = {t: v / mass for t, v in atoms.items()}
    return OffspringLaw(p=p, atoms=atoms, deficit=deficit)


class OffspringTable:
    """Per-flux cache of offspring laws in sampler-friendly array form.

    ``draw`` serves the recursive tree sampler; ``draw_many`` serves the
    batched volume sampler, grouping a whole frontier of vertices by flux
    and drawing child tuples for each group in vectorized numpy.
    """

    def __init__(self, wf: WeightFunction, ev: NumericEvaluation,
                 headroom: Optional[int] = None):
        self.wf = wf
        self.ev = ev
        self.headroom = (
            ev.P_max - wf.K * wf.K if headroom is None else headroom
        )
        self._log_w = ev.log_w()
        self._cache: Dict[int, Tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def law(self, p: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(cumulative probs, flat child array, offsets) for flux p.

        Built directly in array form: atoms from different (c, s) entries
        that share a child tuple are kept as separate rows, which leaves
        the sampling law unchanged and avoids dictionary bookkeeping (the
        exact deduplicated law is :func:`offspring_law`).
        """
        if p not in self._cache:
            if p > self.headroom:
                raise FluxHeadroomExceeded(
                    f"flux {p} beyond safe window {self.headroom}"
                )
            self._cache[p] = self._build(p)
        return self._cache[p]

    def _build(self, p: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        lw = self._log_w
        xf = float(self.ev.x)
        lwp = lw[p]
        if not np.isfinite(lwp):
            raise ValueError(f"W_{p} vanishes; offspring law undefined")
        prob_parts: List[np.ndarray] = []
        flat_parts: List[np.ndarray] = []
        len_parts: List[np.ndarray] = []
        for c, spots, w in self.wf.entries():
            k = len(spots)
            budget = p - c + sum(spots)
            if budget < sum(spots):
                continue
            base = float(w) * xf
            if k == 0:
                if budget == 0:
                    prob_parts.append(np.array([base * math.exp(-lwp)]))
                    flat_parts.append(np.zeros(0, dtype=np.int64))
                    len_parts.append(np.zeros(1, dtype=np.int64))
            elif k == 1:
                q = budget
                if np.isfinite(lw[q]):
                    prob_parts.append(
                        np.array([base * math.exp(lw[q] - lwp)])
                    )
                    flat_parts.append(np.array([q], dtype=np.int64))
                    len_parts.append(np.ones(1, dtype=np.int64))
            elif k == 2:
                s1, s2 = spots
                p1 = np.arange(s1, budget - s2 + 1, dtype=np.int64)
                if p1.size == 0:
                    continue
                p2 = budget - p1
                lsum = lw[p1] + lw[p2]
                ok = np.isfinite(lsum)
                p1, p2, lsum = p1[ok], p2[ok], lsum[ok]
                prob_parts.append(base * np.exp(lsum - lwp))
                flat_parts.append(np.column_stack([p1, p2]).ravel())
                len_parts.append(np.full(p1.size, 2, dtype=np.int64))
            else:  # rare in practice: fall back to the exact enumeration
                law = offspring_law(self.wf, self.ev, p)
                tuples = list(law.atoms)
                prob_parts = [np.array([law.atoms[t] for t in tuples])]
                flat_parts = [
                    np.array([q for t in tuples for q in t], dtype=np.int64)
                ]
                len_parts = [np.array([len(t) for t in tuples], dtype=np.int64)]
                break
        probs = np.concatenate(prob_parts)
        cum = np.cumsum(probs)
        cum /= cum[-1]
        lens = np.concatenate(len_parts)
        offsets = np.zeros(lens.size + 1, dtype=np.int64)
        offsets[1:] = np.cumsum(lens)
        flat = (
            np.concatenate(flat_parts)
            if offsets[-1]
            else np.zeros(0, dtype=np.int64)
        )
        return cum, flat, offsets

    def draw(self, p: int, rng) -> Tuple[int, ...]:
        cum, flat, offsets = self.law(p)
        i = int(np.searchsorted(cum, rng.random(), side="right"))
        i = min(i, len(cum) - 1)
        return tuple(int(q) for q in flat[offsets[i]:offsets[i + 1]])

    def draw_many(self, p: int, count: int, rng
                  ) -> Tuple[np.ndarray, np.ndarray]:
        """``count`` draws at flux p: (flat children, child counts)."""
        cum, flat, offsets = self.law(p)
        idx = np.searchsorted(cum, rng.random(count), side="right")
        np.clip(idx, 0, len(cum) - 1, out=idx)
        starts = offsets[idx]
        lens = offsets[idx + 1] - starts
        total = int(lens.sum())
        if total == 0:
            return np.zeros(0, dtype=np.int64), lens
        pos = np.arange(total)
        shift = np.repeat(np.cumsum(lens) - lens, lens)
        children = flat[np.repeat(starts, lens) + pos - shift]
        return children, lens


# ---------------------------------------------------------------------------
# the splitting measure
# ---------------------------------------------------------------------------


@dataclass
class StepMeasure:
    """The flux marginal nu (and optionally full nu_hat atoms) at one x.

    ``weights[i]`` is nu(q_values[i]) with q_values descending from K down
    to -M.  Mass at q < -M is not dropped silently: the deep tail is
    modeled as nu(-j) ~ C g^j j^(-beta) fitted on the deep half of the
    window, and ``tail_mass`` / ``tail_drift`` carry its extrapolated
    zeroth and first moments (``tail_drift`` is None when the first
    moment diverges, the signature of the infinite-drift phase).
    """

    x: Fraction
    y: float
    M: int
    K: int
    q_values: np.ndarray
    weights: np.ndarray
    tail_mass: float
    tail_exponent: Optional[float]
    tail_geometric: Optional[float] = None
    tail_drift: Optional[float] = None
    atoms: Optional[Dict[tuple, float]] = None

    def nu(self, q: int) -> float:
        if q > self.K or q < -self.M:
            return 0.0
        return float(self.weights[self.K - q])

    def total_mass(self, with_tail: bool = True) -> float:
        m = float(self.weights.sum())
        return m + self.tail_mass if with_tail else m

    def mean_step(self) -> float:
        return float((self.q_values * self.weights).sum())

    def probabilities(self) -> np.ndarray:
        return self.weights / self.weights.sum()

    def fit_tail_exponent(
        self, window: Optional[Tuple[int, int]] = None
    ) -> Tuple[float, float]:
        """(beta, stderr) from consecutive-ratio regression on nu(-j).

        log[nu(-j)/nu(-j-1)] = beta log((j+1)/j) - log g: the intercept
        absorbs any residual exponential factor (an imperfect tilt y), so
        the slope estimates the polynomial exponent alone.
        """
        if window is None:
            window = (20, self.M)
        beta, g, se = _ratio_tail_fit(self.q_values, self.weights, window)
        return beta, se


def _nu_components(
    wf: WeightFunction, lw: np.ndarray, y: float
) -> Iterable[Tuple[int, Tuple[int, ...], float]]:
    """(c, ordered spots, log prefactor) per branching entry.

    The prefactor is x-free: log[(k+1) * w * y^(c - sum s)].
    """
    ly = math.log(y)
    for c, spots, w in wf.entries():
        if not spots:
            continue  # leaves have no continuing child
        j = len(spots)
        yield c, spots, math.log(j * float(w)) + (c - sum(spots)) * ly


def nu(
    wf: WeightFunction,
    ev: NumericEvaluation,
    y: float,
    M: int,
    build_atoms: bool = True,
    atom_cap: int = 2_000_000,
) -> StepMeasure:
    """Construct nu down to depth -M, with an extrapolated deeper tail.

    Sibling fluxes are integrated by iterated convolution of the tilted
    vector W~ restricted to p >= s_i, so the cost is linear in P_max per
    entry rather than exponential in the sibling count.
    """
    if M + wf.K * wf.K > ev.P_max:
        raise ValueError(f"depth M={M} needs P_max >= {M + wf.K**2}")
    lw = ev.log_w()
    wt = _tilde(ev, y)
    xf = float(ev.x)
    K = wf.K
    q_values = np.arange(K, -M - 1, -1)
    weights = np.zeros_like(q_values, dtype=float)
    atoms: Optional[Dict[tuple, float]] = {} if build_atoms else None
    for c, spots, logpre in _nu_components(wf, lw, y):
        s0, siblings = spots[0], spots[1:]
        pre = xf * math.exp(logpre)
        # distribution of m = sum of sibling fluxes
        conv = np.ones(1)
        for s in siblings:
            vec = wt.copy()
            vec[:s] = 0.0
            conv = np.convolve(conv, vec)[: M + K * K + 1]
        total_s = sum(spots)
        for m, cw in enumerate(conv):
            if cw == 0.0:
                continue
            q = total_s - c - m
            if q < -M:
                break
            weights[K - q] += pre * cw
        if atoms is not None:
            for ptuple in _sibling_tuples(siblings, wt, M + K * K):
                q = total_s - c - sum(ptuple)
                if q < -M:
                    continue
                wprod = pre * math.prod(wt[p] for p in ptuple)
                if wprod == 0.0:
                    continue
                key = (int(q), c, spots, ptuple)
                atoms[key] = atoms.get(key, 0.0) + wprod
                if len(atoms) > atom_cap:
                    atoms = None
                    break
    tail = _tail_extrapolation(q_values, weights, M)
    return StepMeasure(
        x=ev.x, y=y, M=M, K=K, q_values=q_values, weights=weights,
        tail_mass=tail[0], tail_exponent=tail[1], tail_geometric=tail[2],
        tail_drift=tail[3], atoms=atoms,
    )


def _sibling_tuples(siblings: Tuple[int, ...], wt: np.ndarray, cap: int):
    """Ordered sibling-flux assignments with total <= cap."""
    if not siblings:
        yield ()
        return
    s, rest = siblings[0], siblings[1:]
    for p in range(s, cap + 1):
        if wt[p] == 0.0:
            continue
        for tail in _sibling_tuples(rest, wt, cap - p):
            yield (p,) + tail


def _ratio_tail_fit(
    q_values: np.ndarray, weights: np.ndarray, window: Tuple[int, int]
) -> Tuple[float, float, float]:
    """(beta, g, stderr of beta) from log-ratio regression on nu(-j).

    log[nu(-j)/nu(-j-1)] = beta log((j+1)/j) - log g: the intercept
    absorbs any residual exponential factor (an imperfect tilt y), so the
    slope estimates the polynomial exponent alone.
    """
    K = int(q_values[0])
    lo, hi = window
    js, lrs = [], []
    for j in range(lo, hi):
        w, nxt = weights[K + j], weights[K + j + 1]
        if w > 0 and nxt > 0:
            js.append(j)
            lrs.append(math.log(nxt / w) * -1.0)
    if len(js) < 8:
        raise ValueError("too few usable tail ratios")
    jarr = np.array(js, dtype=float)
    x = np.log((jarr + 1) / jarr)
    yv = np.array(lrs)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, _, _, _ = np.linalg.lstsq(A, yv, rcond=None)
    beta, neg_log_g = float(coef[0]), float(coef[1])
    resid = yv - A @ coef
    dof = max(1, len(js) - 2)
    cov = (resid @ resid / dof) * np.linalg.inv(A.T @ A)
    return beta, math.exp(-neg_log_g), math.sqrt(cov[0, 0])


def _tail_extrapolation(
    q_values: np.ndarray, weights: np.ndarray, M: int
) -> Tuple[float, Optional[float], Optional[float], Optional[float]]:
    """Moments of the q < -M tail under the fitted ratio model.

    Returns (tail mass, beta, g, tail drift).  The model
    nu(-j) = nu(-M) g^(j-M) (j/M)^(-beta) is anchored at the deepest
    computed atom and summed numerically; a mildly supercritical g (an
    artifact of the finite flux window) is clamped to 1 for the sums.
    The drift contribution is None when its sum diverges, which is the
    signature of the infinite-negative-drift phase (g = 1, beta <= 2).
    """
    # a wide window is needed to separate the polynomial exponent from
    # the geometric factor: over [M/2, M] alone log((j+1)/j) is nearly
    # constant and the two are collinear
    try:
        beta, g, _ = _ratio_tail_fit(q_values, weights, (max(20, M // 20), M))
    except ValueError:
        return 0.0, None, None, None
    anchor = float(weights[-1])
    if anchor <= 0.0:
        return 0.0, beta, g, 0.0
    g_eff = min(g, 1.0)
    drift_divergent = g_eff >= 1.0 and beta <= 2.0
    j = np.arange(M + 1, M + 1 + 200_000, dtype=float)
    terms = anchor * g_eff ** (j - M) * (j / M) ** (-beta)
    mass = float(terms.sum())
    if g_eff >= 1.0 and beta > 1.0:
        mass += float(anchor * M**beta * zeta(beta, float(j[-1] + 1)))
    drift: Optional[float] = None
    if not drift_divergent:
        drift = -float((j * terms).sum())
        if g_eff >= 1.0 and beta > 2.0:
            drift -= float(anchor * M**beta * zeta(beta - 1, float(j[-1] + 1)))
    return mass, beta, g, drift


def _mass_of_log_tilt(wf: WeightFunction, ev: NumericEvaluation):
    """Total nu_hat mass as a function of log y (overflow-safe)."""
    lw = ev.log_w()
    xf = float(ev.x)
    ps = np.arange(ev.P_max + 1)

    def mass(log_y: float) -> float:
        lt = lw + ps * log_y
        with np.errstate(over="ignore"):
            wt = np.exp(np.clip(lt, -745.0, 700.0))
            wt[~np.isfinite(wt)] = 0.0
            suffix = np.cumsum(wt[::-1])[::-1]
        total = 0.0
        y = math.exp(log_y)
        for c, spots, logpre in _nu_components(wf, lw, y):
            term = xf * math.exp(logpre)
            for s in spots[1:]:
                term *= suffix[s]
            total += term
        return total

    return mass


def _scan_minimum(mass, center: float) -> Tuple[float, float]:
    """Coarse-to-fine minimum of mass(log y) around a center log tilt."""
    grid = center + np.linspace(-5.0, 3.0, 161)
    vals = np.array([mass(g) for g in grid])
    vals[~np.isfinite(vals)] = np.inf
    i = int(np.argmin(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(mass, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.x), float(res.fun)


def critical_tilt(
    wf: WeightFunction, ev: NumericEvaluation, y_hint: Optional[float] = None
) -> Tuple[float, float]:
    """(tilt minimizing the nu_hat mass, the minimum mass itself).

    The total mass is a Laplace transform in the tilt, hence strictly
    convex in log y with a unique interior minimum.  The minimum value
    is the drift dichotomy in one number: it is tangent to 1 exactly
    when the step measure can be centered (zero drift, critical x) and
    drops strictly below 1 when it cannot (subcritical x, where mass 1
    is only reached at the radius, with infinite negative drift).
    """
    mass = _mass_of_log_tilt(wf, ev)
    center = math.log(y_hint if y_hint is not None else ev.y_scale)
    log_y, m = _scan_minimum(mass, center)
    return math.exp(log_y), m


def mass_normalization_y(
    wf: WeightFunction,
    ev: NumericEvaluation,
    y_guess: Optional[float] = None,
    rtol: float = 1e-12,
) -> float:
    """The tilt y at which nu_hat has total mass exactly 1.

    By convexity the unit-mass tilts bracket the minimum; the root on
    the increasing branch (above the minimum) is the one that plays the
    role of the radius-of-convergence tilt, so that is the root
    returned.
    """
    mass = _mass_of_log_tilt(wf, ev)
    center = math.log(y_guess if y_guess is not None else ev.y_scale)
    log_min, m_min = _scan_minimum(mass, center)
    if m_min > 1.0:
        raise ValueError(f"nu_hat mass has minimum {m_min} > 1; no unit root")
    hi = log_min
    for _ in range(200):
        hi += 0.02
        if mass(hi) > 1.0:
            break
    else:
        raise ValueError("could not bracket the unit-mass tilt")
    log_y = brentq(lambda ly: mass(ly) - 1.0, log_min, hi, rtol=rtol)
    return float(math.exp(log_y))


# ---------------------------------------------------------------------------
# drift dichotomy
# ---------------------------------------------------------------------------


@dataclass
class DriftDiagnostic:
    depths: np.ndarray        # m
    partial_drift: np.ndarray  # D(m) = sum_{q >= -m} q nu(q)
    verdict: str              # zero-drift | infinite-negative-drift | inconclusive
    threshold: float

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "threshold": self.threshold,
            "D_final": float(self.partial_drift[-1]),
        }


def drift_diagnostic(measure: StepMeasure, M: Optional[int] = None
                     ) -> DriftDiagnostic:
    """Classify the drift of nu from its partial sums D(m).

    The partial drifts are always nonincreasing in the depth m, so the
    two phases are told apart by how D(m) moves: toward zero inside a
    noise band (zero drift), or away from zero without stabilizing
    (infinite negative drift).  The band is 5 M^(-1/2) median|D(m)| with
    the median taken over a dyadic grid of depths — on a uniform grid
    the deep, already-converged values swamp the median and no genuinely
    zero-drift measure at finite M could ever pass.  The dichotomy is
    only a statement about the m -> infinity limit, so an inconclusive
    verdict is allowed and never papered over.
    """
    if M is None:
        M = measure.M
    qs = measure.q_values
    ws = measure.weights
    depths = np.arange(0, M + 1)
    # D(m): cumulative over q = K..-m; index of q in arrays is K - q
    cum = np.cumsum(qs * ws)
    partial = cum[measure.K + depths]
    dyadic = [1 << k for k in range(M.bit_length()) if (1 << k) <= M]
    med = float(np.median(np.abs(partial[dyadic]))) or 1.0
    threshold = 5.0 * med / math.sqrt(M)
    final = float(partial[-1])
    half = float(partial[M // 2])
    growing = abs(final) >= 1.1 * abs(half)
    tail_divergent = (
        measure.tail_exponent is not None
        and measure.tail_exponent <= 2.0
        and (measure.tail_geometric or 1.0) >= 1.0 - 1e-6
    )
    if abs(final) < threshold and not (final < 0 and growing):
        verdict = "zero-drift"
    elif final < -threshold and growing and tail_divergent:
        verdict = "infinite-negative-drift"
    else:
        verdict = "inconclusive"
    return DriftDiagnostic(
        depths=depths, partial_drift=partial, verdict=verdict,
        threshold=threshold,
    )


# ---------------------------------------------------------------------------
# nu_hat sampling
# ---------------------------------------------------------------------------


class NuHatSampler:
    """Draws (q, sibling fluxes) from nu_hat, truncated at the P_max window.

    A component (one branching entry) is chosen with probability
    proportional to its integrated mass; sibling fluxes are then
    independent with density W~_p restricted to p >= s_i.  The truncation
    at P_max removes a tail of relative mass reported as
    ``truncated_fraction`` (it is the same tail the step measure
    extrapolates).
    """

    def __init__(self, wf: WeightFunction, ev: NumericEvaluation, y: float):
        self.wf = wf
        self.K = wf.K
        lw = ev.log_w()
        self.wt = _tilde(ev, y)
        suffix = np.cumsum(self.wt[::-1])[::-1]
        xf = float(ev.x)
        comps: List[Tuple[int, Tuple[int, ...], float]] = []
        masses: List[float] = []
        for c, spots, logpre in _nu_components(wf, lw, y):
            mass = xf * math.exp(logpre)
            for s in spots[1:]:
                mass *= suffix[s]
            comps.append((c, spots, mass))
            masses.append(mass)
        self.components = comps
        total = sum(masses)
        self.total_mass = total
        self.comp_cum = np.cumsum(np.array(masses) / total)
        # per distinct spot minimum: cumulative distribution of W~ above it
        self._sib_cum: Dict[int, np.ndarray] = {}
        for _, spots, _ in comps:
            for s in spots[1:]:
                if s not in self._sib_cum:
                    vec = self.wt.copy()
                    vec[:s] = 0.0
                    cum = np.cumsum(vec)
                    self._sib_cum[s] = cum / cum[-1]

    def sample(self, rng) -> Tuple[int, Tuple[int, ...]]:
        i = int(np.searchsorted(self.comp_cum, rng.random(), side="right"))
        i = min(i, len(self.components) - 1)
        c, spots, _ = self.components[i]
        sibs = tuple(
            int(np.searchsorted(self._sib_cum[s], rng.random(), side="right"))
            for s in spots[1:]
        )
        q = sum(spots) - c - sum(sibs)
        return q, sibs

    def sample_many(self, n: int, rng) -> Tuple[np.ndarray, List[np.ndarray]]:
        """n draws: (increments q, list of sibling-flux arrays per draw slot).

        Sibling arrays are returned per component-slot: slot j holds the
        flux of the j-th sibling for draws whose component has > j
        siblings, and -1 elsewhere.
        """
        comp_idx = np.searchsorted(self.comp_cum, rng.random(n), side="right")
        np.clip(comp_idx, 0, len(self.components) - 1, out=comp_idx)
        max_sibs = max(len(spots) - 1 for _, spots, _ in self.components)
        qs = np.zeros(n, dtype=np.int64)
        sib_slots = [np.full(n, -1, dtype=np.int64) for _ in range(max_sibs)]
        for i, (c, spots, _) in enumerate(self.components):
            mask = comp_idx == i
            cnt = int(mask.sum())
            if cnt == 0:
                continue
            qs[mask] += sum(spots) - c
            for j, s in enumerate(spots[1:]):
                draws = np.searchsorted(
                    self._sib_cum[s], rng.random(cnt), side="right"
                )
                sib_slots[j][mask] = draws
                qs[mask] -= draws
        return qs, sib_slots


def two_big_children_tail(
    sampler: NuHatSampler,
    thresholds: Sequence[int],
    ell: int,
    samples: int,
    rng,
) -> Dict[int, float]:
    """P(at least ell siblings exceed A) across a grid of thresholds A.

    For a step measure with polynomial tail exponent beta this decays
    like A^(ell(1-beta)): large steps are carried by a single big sibling,
    and coincidences of ell of them are polynomially suppressed.
    """
    qs, sib_slots = sampler.sample_many(samples, rng)
    out: Dict[int, float] = {}
    for A in thresholds:
        count = np.zeros(samples, dtype=np.int64)
        for slot in sib_slots:
            count += (slot > A).astype(np.int64)
        out[int(A)] = float((count >= ell).mean())
    return out


# ---------------------------------------------------------------------------
# tree-side vs walk-side step laws
# ---------------------------------------------------------------------------


def tree_step_law(
    wf: WeightFunction, ev: NumericEvaluation, p: int
) -> Dict[Tuple[int, Tuple[int, ...]], float]:
    """First step of the locally largest exploration under the tree law.

    Keys are (increment q, sorted sibling fluxes); the branch follows the
    strictly largest child, so tied or childless offspring tuples
    contribute to no key (their total mass is the defect from 1).
    """
    law = offspring_law(wf, ev, p)
    out: Dict[Tuple[int, Tuple[int, ...]], float] = {}
    for children, prob in law.atoms.items():
        if not children:
            continue
        best = max(children)
        if children.count(best) > 1:
            continue
        rest = tuple(sorted(q for q in children if q != best))
        key = (best - p, rest)
        out[key] = out.get(key, 0.0) + prob
    return out


def nu_hat_step_marginal(
    measure: StepMeasure,
) -> Dict[Tuple[int, Tuple[int, ...]], float]:
    """nu_hat projected to (increment, sorted sibling fluxes)."""
    if measure.atoms is None:
        raise ValueError("step measure was built without atoms")
    out: Dict[Tuple[int, Tuple[int, ...]], float] = {}
    for (q, _c, _spots, sibs), w in measure.atoms.items():
        key = (q, tuple(sorted(sibs)))
        out[key] = out.get(key, 0.0) + w
    return out


def step_law_tv_distance(
    wf: WeightFunction,
    ev: NumericEvaluation,
    measure: StepMeasure,
    p: int,
    window: int = 30,
) -> float:
    """Total-variation distance between the two step laws on a window.

    Restricted to keys with |q| <= window and all siblings <= window, the
    tree-side law at flux p approaches the nu_hat marginal as p grows;
    the distance is reported for empirical monotonicity checks (no rate
    is available).
    """
    tree = tree_step_law(wf, ev, p)
    walk = nu_hat_step_marginal(measure)
    keys = {
        k
        for k in set(tree) | set(walk)
        if abs(k[0]) <= window and all(s <= window for s in k[1])
    }
    return 0.5 * sum(
        abs(tree.get(k, 0.0) - walk.get(k, 0.0)) for k in keys
    )


# ---------------------------------------------------------------------------
# batched volume sampling
# ---------------------------------------------------------------------------


@dataclass
class VolumeSample:
    """Vol(bullet) / Vol(circle) statistics for a batch of sampled trees."""

    p: int
    vol_total: np.ndarray     # vertices per tree (aborted trees: count so far)
    vol_k: np.ndarray         # vertices of flux exactly K
    aborted: np.ndarray       # bool per tree
    abort_fraction: float


def sample_volumes(
    table: OffspringTable,
    p: int,
    n_trees: int,
    rng,
    max_total_vertices: int = 2_000_000_000,
) -> VolumeSample:
    """Grow ``n_trees`` trees from flux p at once, breadth first.

    The whole frontier is advanced level by level with one vectorized
    draw per distinct flux value, so the cost is a few numpy passes per
    level instead of a Python call per vertex.  A tree whose flux leaves
    the safe window (or that pushes the batch past the vertex budget) is
    marked aborted and dropped from the frontier; estimators must quote
    the abort fraction.
    """
    K = table.wf.K
    vol_total = np.ones(n_trees, dtype=np.int64)
    vol_k = (np.full(n_trees, p) == K).astype(np.int64)
    aborted = np.zeros(n_trees, dtype=bool)
    frontier_flux = np.full(n_trees, p, dtype=np.int64)
    frontier_tree = np.arange(n_trees, dtype=np.int64)
    grand_total = n_trees
    while frontier_flux.size:
        order = np.argsort(frontier_flux, kind="stable")
        frontier_flux = frontier_flux[order]
        frontier_tree = frontier_tree[order]
        uniq, starts = np.unique(frontier_flux, return_index=True)
        ends = np.append(starts[1:], frontier_flux.size)
        next_flux: List[np.ndarray] = []
        next_tree: List[np.ndarray] = []
        for f, a, b in zip(uniq, starts, ends):
            owners = frontier_tree[a:b]
            try:
                children, lens = table.draw_many(int(f), b - a, rng)
            except FluxHeadroomExceeded:
                aborted[owners] = True
                continue
            keep = ~aborted[owners]
            if not keep.all():
                total = np.repeat(keep, lens)
                children = children[total]
                owners = owners[keep]
                lens = lens[keep]
            if children.size:
                next_flux.append(children)
                next_tree.append(np.repeat(owners, lens))
        if not next_flux:
            break
        frontier_flux = np.concatenate(next_flux)
        frontier_tree = np.concatenate(next_tree)
        grand_total += frontier_flux.size
        np.add.at(vol_total, frontier_tree, 1)
        is_k = frontier_flux == K
        if is_k.any():
            np.add.at(vol_k, frontier_tree[is_k], 1)
        if grand_total > max_total_vertices:
            aborted[np.unique(frontier_tree)] = True
            break
        live = ~aborted[frontier_tree]
        if not live.all():
            frontier_flux = frontier_flux[live]
            frontier_tree = frontier_tree[live]
    return VolumeSample(
        p=p,
        vol_total=vol_total,
        vol_k=vol_k,
        aborted=aborted,
        abort_fraction=float(aborted.mean()),
    )
