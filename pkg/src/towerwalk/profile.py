"""Spectral gap profile: explicit lower bound, Folner-type upper bound.

For a finite subset U of the group, the smallest eigenvalue of the truncated
Laplacian is bounded below by an explicit decreasing convex function of |U|
(Faber-Krahn direction); at subgroup volumes the bound is attained exactly.
A piecewise-linear Folner construction gives the matching upper bound, and
under the tail-regularity condition the two squeeze the true profile up to a
constant factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .measure import (
    CoefficientSequence,
    log_weighted_tail,
    mass_outside_subgroup,
    tail_regularity,
    weighted_tail,
)
from .spectral import StepSpectralDistribution
from .tower import Tower


def _reject_finite(seq: CoefficientSequence, allow_finite: bool):
    if seq.support is not None and not allow_finite:
        raise ValueError(
            "finitely supported coefficients make the profile degenerate "
            "(zero beyond the support volume); pass allow_finite=True for "
            "oracle-mode use"
        )


def profile_lower_bound(seq: CoefficientSequence, tower: Tower, u: float,
                        *, allow_finite: bool = False) -> float:
    """Explicit lower bound for the spectral gap of any set of size <= u.

    Continuous, convex, strictly decreasing to zero; between consecutive
    subgroup volumes it is sandwiched between half the next tail and the
    current tail.
    """
    _reject_finite(seq, allow_finite)
    if u < 0:
        raise ValueError("set size must be >= 0")
    k = tower.level_of_volume(u)
    return seq.tail(k) - u * weighted_tail(seq, tower, k)


def log_profile_lower_bound(seq: CoefficientSequence, tower: Tower,
                            log_u: float) -> float:
    """log of the profile lower bound, for set sizes far beyond float range."""
    _reject_finite(seq, False)
    k = tower.level_of_log_volume(log_u)
    log_sigma = seq.log_tail(k)
    ratio = math.exp(log_u + log_weighted_tail(seq, tower, k) - log_sigma)
    if ratio >= 1.0:
        raise ArithmeticError("cancellation exhausted float precision")
    return log_sigma + math.log1p(-ratio)


def subgroup_spectral_gap(seq: CoefficientSequence, tower: Tower, k: int,
                          *, allow_finite: bool = False) -> float:
    """Exact lowest truncated eigenvalue of the level-k subgroup.

    Coincides with the profile lower bound at the subgroup volume and lies
    strictly between half the tail and the tail (for infinite support).
    """
    _reject_finite(seq, allow_finite)
    if k < 0:
        raise ValueError("level must be >= 0")
    return mass_outside_subgroup(seq, tower, k)


def profile_lower_bound_inverse(seq: CoefficientSequence, tower: Tower,
                                y: float, rtol: float = 1e-10) -> float:
    """Monotone bisection inverse of the profile lower bound.

    Valid for y in (0, 1); the round trip agrees with y to the requested
    relative tolerance.
    """
    _reject_finite(seq, False)
    if not 0.0 < y < 1.0:
        raise ValueError(f"inverse needs y in (0, 1), got {y}")
    f = lambda u: profile_lower_bound(seq, tower, u)
    lo, hi = 0.0, 1.0
    while f(hi) >= y:
        lo = hi
        hi *= 4.0
        if hi > 1e300:
            raise ArithmeticError("inverse out of float range")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if f(mid) >= y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Folner-type upper bound
# ---------------------------------------------------------------------------

class ProfileBand:
    """Two-sided profile band: explicit lower bound and Folner upper bound.

    The upper bound comes from the piecewise-linear interpolation of
    n -> volume at the first level whose subgroup gap drops below 1/n^2;
    its generalized inverse squared-reciprocal dominates the true profile.
    """

    def __init__(self, seq: CoefficientSequence, tower: Tower):
        _reject_finite(seq, False)
        self.seq = seq
        self.tower = tower
        self._k_of = [None, 0]  # k(0) unused; k(1) = 0 since gaps are < 1
        self._knots = [None, tower.volume(0)]  # F(1) = volume(0)

    # k(n) = first level whose subgroup gap is <= 1/n^2; monotone in n.
    def k_of(self, n: int) -> int:
        if n < 1:
            raise ValueError("n must be >= 1")
        while len(self._k_of) <= n:
            m = len(self._k_of)
            threshold = 1.0 / (m * m)
            k = self._k_of[-1]
            while subgroup_spectral_gap(self.seq, self.tower, k) > threshold:
                k += 1
            self._k_of.append(k)
            self._knots.append(self.tower.volume(k))
        return self._k_of[n]

    def knot(self, n: int) -> int:
        """F(n): exact volume at the n-th knot."""
        self.k_of(n)
        return self._knots[n]

    def knots(self, top: int):
        return [(n, self.knot(n)) for n in range(1, top + 1)]

    def interpolant(self, v: float) -> float:
        """The piecewise-linear F at real argument v >= 1."""
        if v < 1:
            raise ValueError("argument must be >= 1")
        n = int(math.floor(v))
        f0, f1 = self.knot(n), self.knot(n + 1)
        return f0 + (v - n) * (f1 - f0)

    def _inverse(self, v: float) -> float:
        """Generalized inverse: the largest u with F(u) <= v."""
        n = 1
        while self.knot(n) <= v:
            n += 1
        # knot(n-1) <= v < knot(n); take the right end of any flat run
        f0, f1 = self.knot(n - 1), self.knot(n)
        if f1 == f0:  # pragma: no cover - flat segments end before n
            return float(n)
        return (n - 1) + (v - f0) / (f1 - f0)

    def upper_bound(self, v: float) -> float:
        """Folner upper bound for the profile at set size v > 1."""
        if v <= 1:
            raise ValueError("upper bound defined for v > 1")
        u = self._inverse(v)
        if u <= 1.0:
            return math.inf
        return (u - 1.0) ** -2

    def lower_bound(self, v: float) -> float:
        return profile_lower_bound(self.seq, self.tower, v)

    def band_report(self, grid: Sequence[float]) -> dict:
        """Evaluate the band on a grid and report the realized constants."""
        rows = []
        worst_ratio = 0.0
        for v in grid:
            lo = self.lower_bound(v)
            hi = self.upper_bound(v)
            rows.append((v, lo, hi))
            if math.isfinite(hi) and lo > 0:
                worst_ratio = max(worst_ratio, hi / lo)
        reg = tail_regularity(self.seq)
        return {
            "rows": rows,
            "ordered": all(lo <= hi for _, lo, hi in rows),
            "max_upper_over_lower": worst_ratio,
            "tail_regularity_holds": reg.holds,
            "tail_regularity_lambda": reg.lam,
        }


def folner_upper_bound(seq: CoefficientSequence, tower: Tower, v: float) -> float:
    """One-shot Folner upper bound; build a ProfileBand for repeated use."""
    return ProfileBand(seq, tower).upper_bound(v)


# ---------------------------------------------------------------------------
# Spectral distribution vs profile inverse
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConsistencyRow:
    u: float
    inv_mass: float     # 1/N(u)
    lower: float        # inverse bound at (1+lam) u
    upper: float        # inverse bound at u/(2 (1+lam))
    ok: bool


@dataclass(frozen=True)
class ConsistencyReport:
    rows: tuple
    all_hold: bool
    advisory: bool
    lam: float


def spectral_profile_consistency(seq: CoefficientSequence, tower: Tower,
                                 grid: Optional[Sequence[float]] = None,
                                 ) -> ConsistencyReport:
    """Check the dilation bridge between the spectral distribution and the
    profile inverse on a grid of spectral arguments.

    Under tail regularity with constant lam the reciprocal spectral mass is
    squeezed between the profile inverses at (1+lam)u and u/(2(1+lam)).
    Without regularity the report is advisory: failures are expected.
    """
    reg = tail_regularity(seq)
    lam = reg.lam if math.isfinite(reg.lam) else 1.0
    dist = StepSpectralDistribution(seq, tower)
    if grid is None:
        top = seq.tail(0)
        grid = np.geomspace(1e-8, top, 60)
    rows = []
    for u in grid:
        u = float(u)
        n_val = dist.value_at(u)
        if n_val <= 0.0:
            continue
        inv_mass = 1.0 / n_val
        hi_arg = (1.0 + lam) * u
        lower = 0.0 if hi_arg >= 1.0 else profile_lower_bound_inverse(seq, tower, hi_arg)
        upper = profile_lower_bound_inverse(seq, tower, u / (2.0 * (1.0 + lam)))
        rows.append(ConsistencyRow(u, inv_mass, lower, upper,
                                   lower < inv_mass < upper))
    return ConsistencyReport(
        rows=tuple(rows),
        all_hold=all(r.ok for r in rows),
        advisory=not reg.holds,
        lam=lam,
    )


# ---------------------------------------------------------------------------
# Growth order estimation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OrderEstimate:
    upper: float    # sup of log f/log x over the tail half
    lower: float    # inf of log f/log x over the tail half
    slope: float    # least-squares slope of log f against log x
    n_tail: int


def order_estimate(xs, fs, *, logscale: bool = False) -> OrderEstimate:
    """Estimate the growth order of f from samples (f ~ x^order).

    Needs at least 20 samples spanning four decades.  With ``logscale`` the
    inputs are already log x and log f, which permits arguments far beyond
    float range.
    """
    lx = np.asarray(xs, dtype=float)
    lf = np.asarray(fs, dtype=float)
    if not logscale:
        if np.any(lx <= 1.0):
            raise ValueError("order estimation needs arguments above 1")
        lx, lf = np.log(lx), np.log(lf)
    if lx.shape != lf.shape or lx.size < 20:
        raise ValueError("need at least 20 samples")
    order = np.argsort(lx)
    lx, lf = lx[order], lf[order]
    if lx[-1] - lx[0] < 4 * math.log(10.0):
        raise ValueError("samples must span at least four decades")
    half = lx.size // 2
    tx, tf = lx[half:], lf[half:]
    ratios = tf / tx
    slope = np.polyfit(tx, tf, 1)[0]
    return OrderEstimate(
        upper=float(np.max(ratios)),
        lower=float(np.min(ratios)),
        slope=float(slope),
        n_tail=int(tx.size),
    )
