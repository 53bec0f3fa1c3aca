"""Coefficient sequences c and everything derived from their tails.

A walk is defined by a probability vector c = (c_0, c_1, ...) over tower
levels; the step measure averages the uniform measures of the subgroups with
these weights.  Every spectral quantity downstream is a function of the tails
sigma(k) = sum_{i>k} c_i, so the families here expose tails (and log-tails)
with closed forms or certified summation rather than naive forward sums.

Also here: the continuous-time embedding coefficients C_k(t), exact point
masses of the time-t measure, the compound-Poisson rate sequence, spectral
subordination, and the convex decomposition of an arbitrary finitely
supported measure into level components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

from scipy.special import zeta as _hurwitz_zeta

from .tower import Tower, GroupElement

_LOG_HALF = math.log(0.5)


def _log_diff(log_a: float, log_b: float) -> float:
    """log(e^log_a - e^log_b) for log_a > log_b, stable when nearly equal."""
    if log_b == -math.inf:
        return log_a
    d = log_b - log_a
    if d >= 0:
        raise ValueError("log_diff needs log_a > log_b")
    x = -math.expm1(d)  # 1 - e^d in (0, 1]
    if x > 1e-8:
        return log_a + math.log(x)
    # 1 - e^d ~ -d for d -> 0-; expand to keep relative accuracy
    return log_a + math.log(-d) + math.log1p(d / 2.0 + d * d / 12.0)


class CoefficientSequence:
    """Base class for level-weight sequences with reliable tails.

    Subclasses must provide ``log_tail``; everything else has generic
    implementations in terms of it.  ``tail(-1) == 1`` always.
    """

    #: last level with positive mass, or None for infinite support
    support: Optional[int] = None

    # -- core accessors ----------------------------------------------------

    def log_tail(self, k: int) -> float:
        raise NotImplementedError

    def tail(self, k: int) -> float:
        if k < -1:
            raise ValueError("tail index must be >= -1")
        lt = self.log_tail(k)
        return 0.0 if lt == -math.inf else math.exp(lt)

    def coeff(self, k: int) -> float:
        if k < 0:
            raise ValueError("coefficient index must be >= 0")
        return self.tail(k - 1) - self.tail(k)

    def log_coeff(self, k: int) -> float:
        if k < 0:
            raise ValueError("coefficient index must be >= 0")
        return _log_diff(self.log_tail(k - 1), self.log_tail(k))

    def partial_sum(self, k: int) -> float:
        """Mass at or below level k; complements the tail exactly."""
        if k < -1:
            raise ValueError("index must be >= -1")
        return 1.0 - self.tail(k)

    def log_partial_sum(self, k: int) -> float:
        if k == -1:
            return -math.inf
        lt = self.log_tail(k)
        if lt == -math.inf:
            return 0.0
        if lt >= 0.0:  # tail(k) == 1 cannot happen for k >= 0 families
            return -math.inf
        return math.log1p(-math.exp(lt)) if lt > -700 else -math.exp(lt)

    # -- metadata hooks ----------------------------------------------------

    def describe(self) -> str:
        return type(self).__name__

    def tail_regularity_declared(self) -> Optional[tuple]:
        """(holds, lambda) for families with an analytic verdict, else None."""
        return None

    def recurrence_verdict(self, tower: Tower) -> Optional[str]:
        """'recurrent'/'transient' when decidable in closed form, else None."""
        return None


class GeometricSequence(CoefficientSequence):
    """c_k = (1-q) q^k with exact geometric tails q^(k+1)."""

    def __init__(self, q: float):
        if not 0.0 < q < 1.0:
            raise ValueError(f"q must lie in (0, 1), got {q}")
        self.q = float(q)
        self._log_q = math.log(self.q)

    def describe(self) -> str:
        return f"geometric(q={self.q})"

    def log_tail(self, k: int) -> float:
        if k < -1:
            raise ValueError("tail index must be >= -1")
        return (k + 1) * self._log_q

    def tail(self, k: int) -> float:
        if k < -1:
            raise ValueError("tail index must be >= -1")
        return self.q ** (k + 1)

    def coeff(self, k: int) -> float:
        if k < 0:
            raise ValueError("coefficient index must be >= 0")
        return (1.0 - self.q) * self.q**k

    def log_coeff(self, k: int) -> float:
        if k < 0:
            raise ValueError("coefficient index must be >= 0")
        return math.log1p(-self.q) + k * self._log_q

    def tail_regularity_declared(self):
        # c_k / tail(k) is the constant (1-q)/q
        return True, (1.0 - self.q) / self.q

    def recurrence_verdict(self, tower: Tower) -> Optional[str]:
        from .tower import PowersOfTwoTower, FactorialTower

        if isinstance(tower, PowersOfTwoTower):
            # terms 1/(v_k tail(k)) = (2q)^(-k)/q
            return "recurrent" if 2.0 * self.q <= 1.0 else "transient"
        if isinstance(tower, FactorialTower):
            return "transient"
        return None


class PolynomialSequence(CoefficientSequence):
    """c_k proportional to (k+1)^(-p); tails are Hurwitz zeta ratios."""

    def __init__(self, p: float):
        if p <= 1.0:
            raise ValueError(f"p must exceed 1, got {p}")
        self.p = float(p)
        self._norm = float(_hurwitz_zeta(self.p, 1.0))

    def describe(self) -> str:
        return f"polynomial(p={self.p})"

    def coeff(self, k: int) -> float:
        if k < 0:
            raise ValueError("coefficient index must be >= 0")
        return (k + 1.0) ** (-self.p) / self._norm

    def tail(self, k: int) -> float:
        if k < -1:
            raise ValueError("tail index must be >= -1")
        if k == -1:
            return 1.0
        return float(_hurwitz_zeta(self.p, k + 2.0)) / self._norm

    def log_tail(self, k: int) -> float:
        t = self.tail(k)
        return math.log(t) if t > 0 else -math.inf

    def tail_regularity_declared(self):
        # ratio c_k/tail(k) ~ (p-1)/k decays; the sup sits at small k
        sup = max(self.coeff(k) / self.tail(k) for k in range(64))
        return True, sup

    def recurrence_verdict(self, tower: Tower) -> Optional[str]:
        from .tower import PowersOfTwoTower, FactorialTower

        if isinstance(tower, (PowersOfTwoTower, FactorialTower)):
            # terms k^(p-1)/v_k vanish geometrically
            return "transient"
        return None


def iterated_log(x: float, depth: int) -> float:
    """Shifted iterated logarithm log(1+log(1+...log(1+x))), positive on x>0."""
    for _ in range(depth):
        x = math.log1p(x)
    return x


def iterated_exp(x: float, depth: int) -> float:
    """Inverse of the shifted iterated logarithm; saturates at infinity."""
    for _ in range(depth):
        if x > 709.0:
            return math.inf
        x = math.expm1(x)
    return x


class IteratedLogSequence(CoefficientSequence):
    """Very heavy tails: tail(k) = (L(k+1+s)/L(s))^(1-p), L the iterated log."""

    def __init__(self, depth: int, p: float, shift: float = 1.0):
        if depth < 1:
            raise ValueError("depth must be >= 1")
        if p <= 1.0:
            raise ValueError(f"p must exceed 1, got {p}")
        if shift <= 0.0:
            raise ValueError("shift must be positive")
        self.depth = int(depth)
        self.p = float(p)
        self.shift = float(shift)
        self._log_base = math.log(iterated_log(self.shift, self.depth))

    def describe(self) -> str:
        return f"iterated_log(depth={self.depth}, p={self.p})"

    def log_tail(self, k: int) -> float:
        if k < -1:
            raise ValueError("tail index must be >= -1")
        val = iterated_log(k + 1 + self.shift, self.depth)
        return (1.0 - self.p) * (math.log(val) - self._log_base)

    def tail_regularity_declared(self):
        sup = max(self.coeff(k) / self.tail(k) for k in range(256))
        return True, sup

    def recurrence_verdict(self, tower: Tower) -> Optional[str]:
        from .tower import PowersOfTwoTower, FactorialTower

        if isinstance(tower, (PowersOfTwoTower, FactorialTower)):
            return "transient"
        return None


class ExplicitSequence(CoefficientSequence):
    """Finitely supported coefficients given outright.

    Infinite user-defined sequences must come with a tail rule (see
    ``TailSequence``); silent forward-sum tails are refused because tail
    cancellation destroys long-time accuracy.
    """

    def __init__(self, coeffs: Sequence[float]):
        coeffs = [float(c) for c in coeffs]
        if not coeffs:
            raise ValueError("need at least one coefficient")
        if any(c < 0 for c in coeffs):
            raise ValueError("coefficients must be non-negative")
        total = math.fsum(coeffs)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"coefficients sum to {total!r}, expected 1")
        self._coeffs = coeffs
        # backward sums keep small tails fully accurate
        tails = [0.0] * len(coeffs)
        acc = 0.0
        for k in range(len(coeffs) - 1, 0, -1):
            acc += coeffs[k]
            tails[k - 1] = acc
        self._tails = tails
        self.support = len(coeffs) - 1

    def describe(self) -> str:
        return f"explicit(levels={self.support + 1})"

    def coeff(self, k: int) -> float:
        if k < 0:
            raise ValueError("coefficient index must be >= 0")
        return self._coeffs[k] if k <= self.support else 0.0

    def tail(self, k: int) -> float:
        if k < -1:
            raise ValueError("tail index must be >= -1")
        if k == -1:
            return 1.0
        return self._tails[k] if k < self.support else 0.0

    def log_tail(self, k: int) -> float:
        t = self.tail(k)
        return math.log(t) if t > 0.0 else -math.inf


class TailSequence(CoefficientSequence):
    """Sequence defined by a tail rule, optionally with an explicit head.

    For k >= start-1 the tail is ``sigma_fn(k)``; below that the head
    coefficients apply.  The constructor checks consistency (head mass plus
    the first ruled tail equals 1) and strict tail decrease on a sample of
    levels.
    """

    def __init__(
        self,
        sigma_fn: Callable[[int], float],
        *,
        log_sigma_fn: Optional[Callable[[int], float]] = None,
        head: Sequence[float] = (),
        description: str = "tail_rule",
        declared_regularity: Optional[tuple] = None,
        declared_recurrence: Optional[dict] = None,
    ):
        self._sigma_fn = sigma_fn
        self._log_sigma_fn = log_sigma_fn
        self._head = [float(c) for c in head]
        self.start = len(self._head)
        self._description = description
        self._declared_regularity = declared_regularity
        self._declared_recurrence = declared_recurrence or {}

        if any(c <= 0 for c in self._head):
            raise ValueError("head coefficients must be positive")
        head_mass = math.fsum(self._head)
        first = sigma_fn(self.start - 1) if self.start > 0 else sigma_fn(-1)
        if abs(head_mass + first - 1.0) > 1e-12 and self.start > 0:
            raise ValueError(
                f"head mass {head_mass} inconsistent with tail {first} at start"
            )
        if self.start == 0 and abs(first - 1.0) > 1e-12:
            raise ValueError(f"tail rule must give 1 at level -1, got {first}")
        probe = list(range(self.start, self.start + 8)) + [max(48, self.start + 16)]
        prev = self.log_tail(self.start - 1)
        for k in probe:
            cur = self.log_tail(k)
            if not cur < prev:
                raise ValueError(f"tail rule is not strictly decreasing at level {k}")
            prev = cur

    def describe(self) -> str:
        return self._description

    def log_tail(self, k: int) -> float:
        if k < -1:
            raise ValueError("tail index must be >= -1")
        if k < self.start - 1:
            t = 1.0 - math.fsum(self._head[: k + 1])
            return math.log(t)
        if self._log_sigma_fn is not None:
            return self._log_sigma_fn(k)
        s = self._sigma_fn(k)
        return math.log(s) if s > 0 else -math.inf

    def tail(self, k: int) -> float:
        if k < -1:
            raise ValueError("tail index must be >= -1")
        if k < self.start - 1:
            return 1.0 - math.fsum(self._head[: k + 1])
        try:
            return float(self._sigma_fn(k))
        except OverflowError:
            return super().tail(k)

    def coeff(self, k: int) -> float:
        if k < len(self._head):
            return self._head[k]
        return super().coeff(k)

    def tail_regularity_declared(self):
        return self._declared_regularity

    def recurrence_verdict(self, tower: Tower) -> Optional[str]:
        return self._declared_recurrence.get(tower.kind)


# ---------------------------------------------------------------------------
# Tail regularity (uniform bound c_k <= lambda * tail(k))
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TailRegularityReport:
    holds: bool
    lam: float
    analytic: bool
    horizon: int
    trend: str  # "bounded" | "growing"


def tail_regularity(seq: CoefficientSequence, horizon: int = 256) -> TailRegularityReport:
    """Check the uniform tail bound c_k <= lambda * tail(k).

    Closed-form families answer analytically; otherwise the ratio is scanned
    up to ``horizon`` and a growing trend marks the bound as failed.
    """
    declared = seq.tail_regularity_declared()
    top = horizon if seq.support is None else min(horizon, seq.support)
    ratios = []
    for k in range(top):
        lt = seq.log_tail(k)
        if lt == -math.inf:
            break
        ratios.append(math.exp(seq.log_coeff(k) - lt))
    sup = max(ratios) if ratios else 0.0
    if declared is not None:
        holds, lam = declared
        return TailRegularityReport(holds, lam, True, horizon, "bounded" if holds else "growing")
    half = len(ratios) // 2
    growing = len(ratios) >= 8 and all(
        ratios[i + 1] >= ratios[i] * 0.999 for i in range(half, len(ratios) - 1)
    ) and ratios[-1] > 4.0 * max(ratios[: half or 1])
    return TailRegularityReport(not growing, sup, False, horizon, "growing" if growing else "bounded")


# ---------------------------------------------------------------------------
# Continuous-time embedding
# ---------------------------------------------------------------------------

def semigroup_coeff(seq: CoefficientSequence, k: int, t: float) -> float:
    """Weight of the level-k uniform measure inside the time-t measure.

    Equals S_k^t - S_{k-1}^t with S the partial sums, evaluated through logs
    to avoid cancellation for large t.
    """
    if t <= 0:
        raise ValueError(f"time must be positive, got {t}")
    if k < 0:
        raise ValueError("level must be >= 0")
    ls_k = seq.log_partial_sum(k)
    ls_prev = seq.log_partial_sum(k - 1)
    if ls_prev == -math.inf:
        return math.exp(t * ls_k)
    return math.exp(t * ls_k) * -math.expm1(t * (ls_prev - ls_k))


def _series_caps(seq, tower: Tower):
    """(stop level, lumped) for series over levels.

    ``lumped`` means the tower freezes before the sequence support runs out,
    so the stop level absorbs all remaining mass at constant volume.
    """
    top = tower.support_level
    sup = seq.support
    if top is not None and (sup is None or sup > top):
        return top, True
    return sup, False


def _shell_series(seq, tower: Tower, t: float, level: int, tol: float):
    """sum_{n>=level} C_n(t)/v_n with a certified truncation bound.

    Returns (value, final tail bound, top level used).  The bound is
    (1 - S_K^t)/v_{K+1}, and shrinks geometrically because volume ratios
    are >= 2.
    """
    stop, lumped = _series_caps(seq, tower)
    acc = 0.0
    n = level
    while True:
        if stop is not None and n >= stop:
            if lumped:
                acc += -math.expm1(t * seq.log_partial_sum(n - 1)) / tower.volume(n)
            else:
                acc += semigroup_coeff(seq, n, t) / tower.volume(n)
            return acc, 0.0, n
        acc += semigroup_coeff(seq, n, t) / tower.volume(n)
        rest = -math.expm1(t * seq.log_partial_sum(n))
        bound = rest / tower.volume(n + 1)
        if bound <= tol:
            return acc, bound, n
        n += 1


def point_mass(seq, tower: Tower, t: float, x, tol: float = 1e-14) -> float:
    """Exact mass the time-t measure puts on a single element.

    ``x`` may be a GroupElement or its minimal level; the value is constant
    on each level shell.
    """
    level = x.min_level if isinstance(x, GroupElement) else int(x)
    value, _, _ = _shell_series(seq, tower, t, level, tol)
    return value


def _log_one_minus_power(log_s: float, t: float) -> float:
    """log(1 - s^t) from log s, stable for s near 1 and for tiny s^t."""
    y = t * log_s  # log s^t <= 0
    if y == -math.inf:
        return 0.0
    return math.log(-math.expm1(y)) if y < -1e-10 else math.log(-y) + y / 2.0


def log_shell_series(seq, tower: Tower, t: float, level: int, rel_tol: float = 1e-16) -> float:
    """log of sum_{n>=level} C_n(t)/v_n, usable far below float underflow."""
    if t <= 0:
        raise ValueError(f"time must be positive, got {t}")
    stop, lumped = _series_caps(seq, tower)
    terms = []
    running = -math.inf
    n = level
    log_tol = math.log(rel_tol)
    while True:
        if stop is not None and n >= stop and lumped:
            terms.append(_log_one_minus_power(seq.log_partial_sum(n - 1), t) - tower.log_volume(n))
            break
        ls_k = seq.log_partial_sum(n)
        ls_prev = seq.log_partial_sum(n - 1)
        if ls_prev == -math.inf:
            lterm = t * ls_k - tower.log_volume(n)
        else:
            gap = t * (ls_prev - ls_k)
            body = math.log(-math.expm1(gap)) if gap < -1e-10 else math.log(-gap) + gap / 2.0
            lterm = t * ls_k + body - tower.log_volume(n)
        terms.append(lterm)
        running = max(running, lterm)
        if stop is not None and n >= stop:
            break
        lbound = _log_one_minus_power(seq.log_partial_sum(n), t) - tower.log_volume(n + 1)
        if lbound <= running + log_tol:
            break
        n += 1
    m = max(terms)
    return m + math.log(math.fsum(math.exp(v - m) for v in terms))


# ---------------------------------------------------------------------------
# Volume-weighted tails and subgroup masses
# ---------------------------------------------------------------------------

@lru_cache(maxsize=200_000)
def _weighted_tail_cached(seq, tower, k: int, tol: float) -> float:
    stop, lumped = _series_caps(seq, tower)
    acc = 0.0
    i = k + 1
    while True:
        if stop is not None and i >= stop:
            if lumped:
                acc += seq.tail(i - 1) / tower.volume(i)
            else:
                acc += seq.coeff(i) / tower.volume(i)
            return acc
        acc += seq.coeff(i) / tower.volume(i)
        bound = seq.tail(i) / tower.volume(i + 1)
        if bound <= tol * acc or bound <= 1e-320:
            return acc
        i += 1


def weighted_tail(seq, tower: Tower, k: int, tol: float = 1e-15) -> float:
    """sum_{i>k} c_i/v_i with certified relative truncation error."""
    if k < -1:
        raise ValueError("index must be >= -1")
    return _weighted_tail_cached(seq, tower, k, tol)


def log_weighted_tail(seq, tower: Tower, k: int) -> float:
    """log of sum_{i>k} c_i/v_i, for regimes far below float underflow."""
    stop, lumped = _series_caps(seq, tower)
    terms = []
    running = -math.inf
    i = k + 1
    while True:
        if stop is not None and i >= stop:
            if lumped:
                terms.append(seq.log_tail(i - 1) - tower.log_volume(i))
            elif seq.log_tail(i - 1) > -math.inf:
                terms.append(seq.log_coeff(i) - tower.log_volume(i))
            break
        lterm = seq.log_coeff(i) - tower.log_volume(i)
        terms.append(lterm)
        running = max(running, lterm)
        lbound = seq.log_tail(i) - tower.log_volume(i + 1)
        if lbound <= running + math.log(1e-18):
            break
        i += 1
    if not terms:
        return -math.inf
    m = max(terms)
    return m + math.log(math.fsum(math.exp(v - m) for v in terms))


def mass_outside_subgroup(seq, tower: Tower, k: int, tol: float = 1e-15) -> float:
    """Exact step-measure mass outside the level-k subgroup.

    Equals sum_{i>k} c_i (1 - v_k/v_i) and also the lowest truncated
    eigenvalue of the level-k subgroup.
    """
    return seq.tail(k) - tower.volume(k) * weighted_tail(seq, tower, k, tol)


# ---------------------------------------------------------------------------
# Compound-Poisson representation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PoissonRates:
    """Rates of the compound-Poisson representation of the semigroup.

    The jump measure weights the level-k uniform measure with ``rate(k)``;
    its total mass is ``total = pi0 - log c_0``.
    """

    seq: CoefficientSequence
    pi0: float

    def rate(self, k: int) -> float:
        if k < 0:
            raise ValueError("level must be >= 0")
        if k == 0:
            return self.pi0
        return self.seq.log_partial_sum(k) - self.seq.log_partial_sum(k - 1)

    @property
    def total(self) -> float:
        return self.pi0 - self.seq.log_partial_sum(0)


def poisson_rates(seq: CoefficientSequence, pi0: float = 1.0) -> PoissonRates:
    """Jump rates pi_k = log(S_k/S_{k-1}); pi0 at the identity is free."""
    if pi0 <= 0:
        raise ValueError("pi0 must be positive")
    return PoissonRates(seq, float(pi0))


# ---------------------------------------------------------------------------
# Subordination
# ---------------------------------------------------------------------------

class PowerSubordinatedSequence(CoefficientSequence):
    """Tails raised to a power alpha > 0; exact in the log domain."""

    def __init__(self, base: CoefficientSequence, alpha: float):
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.base = base
        self.alpha = float(alpha)
        self.support = base.support

    def describe(self) -> str:
        return f"power(alpha={self.alpha}) of {self.base.describe()}"

    def log_tail(self, k: int) -> float:
        return self.alpha * self.base.log_tail(k)


class SubordinatedSequence(CoefficientSequence):
    """Tails pushed through a continuous increasing phi with phi(0)=0, phi(1)=1."""

    def __init__(self, base: CoefficientSequence, phi: Callable[[float], float]):
        self.base = base
        self.phi = phi
        self.support = base.support

    def describe(self) -> str:
        return f"subordinated {self.base.describe()}"

    def tail(self, k: int) -> float:
        if k < -1:
            raise ValueError("tail index must be >= -1")
        return float(self.phi(self.base.tail(k)))

    def log_tail(self, k: int) -> float:
        t = self.tail(k)
        return math.log(t) if t > 0 else -math.inf


def subordinate(seq: CoefficientSequence, phi, *, validate: bool = True) -> CoefficientSequence:
    """New sequence whose tails are phi of the old tails.

    The time-changed walk generator is the image of the old one under phi,
    so phi must be continuous increasing with phi(0)=0 and phi(1)=1; the
    contract is spot-checked on a grid.
    """
    if validate:
        if abs(phi(0.0)) > 1e-12 or abs(phi(1.0) - 1.0) > 1e-12:
            raise ValueError("phi must satisfy phi(0)=0 and phi(1)=1")
        prev = 0.0
        for i in range(1, 65):
            x = i / 64.0
            cur = float(phi(x))
            if cur < prev - 1e-12 or not 0.0 <= cur <= 1.0 + 1e-12:
                raise ValueError("phi must be increasing from [0,1] onto [0,1]")
            prev = cur
    return SubordinatedSequence(seq, phi)


def fractional_power(seq: CoefficientSequence, alpha: float) -> CoefficientSequence:
    """Subordination by the power function; stays exact in log tails."""
    return PowerSubordinatedSequence(seq, alpha)


# ---------------------------------------------------------------------------
# Convex decomposition of a finitely supported measure
# ---------------------------------------------------------------------------

def decompose_finite(mu: dict, tower: Tower):
    """Split a finitely supported probability measure into level components.

    Returns (c, components) with the measure equal to sum_k c_k * comp_k,
    every component a probability measure supported in the level-k subgroup.
    This is the constructive choice; representations are not unique.
    """
    total = math.fsum(mu.values())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"measure mass {total} is not 1")
    if any(v < 0 for v in mu.values()):
        raise ValueError("measure must be non-negative")
    top = max(x.min_level for x in mu)
    shells = [dict() for _ in range(top + 1)]
    for x, w in mu.items():
        if w > 0:
            shells[x.min_level][x] = w
    shell_mass = [math.fsum(s.values()) for s in shells]
    outside = [0.0] * (top + 2)
    for k in range(top, -1, -1):
        outside[k] = outside[k + 1] + shell_mass[k]  # mass strictly above level k-1

    coeffs, components = [], []
    ratio_sum = 0.0
    for k in range(top + 1):
        if outside[k] <= 0:
            break
        ratio_sum += shell_mass[k] / outside[k]
        if ratio_sum <= 0:
            coeffs.append(0.0)
            components.append({tower.identity(): 1.0})
            continue
        comp = {}
        for j in range(k + 1):
            if shell_mass[j] == 0:
                continue
            scale = 1.0 / (outside[j] * ratio_sum)
            for x, w in shells[j].items():
                comp[x] = comp.get(x, 0.0) + w * scale
        coeffs.append(shell_mass[k] * ratio_sum)
        components.append(comp)
    return coeffs, components


# ---------------------------------------------------------------------------
# Truncation folding (oracle fixtures)
# ---------------------------------------------------------------------------

def fold_truncation(seq: CoefficientSequence, top_level: int) -> ExplicitSequence:
    """Fold all mass above ``top_level`` into it, making the series finite.

    On the matching truncated tower every spectral formula becomes an exact
    finite sum.
    """
    if top_level < 1:
        raise ValueError("top_level must be >= 1")
    coeffs = [seq.coeff(k) for k in range(top_level)]
    coeffs.append(seq.tail(top_level - 1))  # c_K + tail(K)
    return ExplicitSequence(coeffs)
