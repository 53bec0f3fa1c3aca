"""Legendre-type transforms and decay-targeted coefficient designers.

The rate function of the spectral step function controls return-probability
decay through its Legendre transform; the Kohlbecker transform (a log-Laplace
transform of the induced measure) agrees with it to first order.  Designers
run the construction in reverse: given a target decay profile they pick a
rate function whose transform beats (or undershoots) the target and solve for
coefficient tails matching the tower volumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize

from .measure import CoefficientSequence, TailSequence, iterated_exp, iterated_log
from .tower import Tower


class BracketError(ValueError):
    """The optimum of a transform objective fell on the search boundary."""


class QuadratureError(ArithmeticError):
    """Adaptive quadrature failed to reach the requested accuracy."""


@dataclass
class ScalarFunction:
    """A scalar function on the positive axis with declared shape flags.

    Declared monotonicity/convexity is spot-checked on a 64-point log grid
    of the validity interval at construction time.
    """

    fn: Callable[[float], float]
    name: str = ""
    domain: tuple = (1e-12, 1e12)
    decreasing: bool = False
    increasing: bool = False
    convex: Optional[bool] = None
    concave: Optional[bool] = None

    def __post_init__(self):
        lo, hi = self.domain
        if not (0 < lo < hi):
            raise ValueError("domain must satisfy 0 < lo < hi")
        xs = np.geomspace(lo, hi, 64)
        ys = [float(self.fn(x)) for x in xs]
        tol = 1e-9 * max(1.0, max(abs(y) for y in ys if math.isfinite(y)))
        pairs = list(zip(ys, ys[1:]))
        if self.decreasing and any(b > a + tol for a, b in pairs):
            raise ValueError(f"{self.name or 'function'} declared decreasing but is not")
        if self.increasing and any(b < a - tol for a, b in pairs):
            raise ValueError(f"{self.name or 'function'} declared increasing but is not")
        if self.convex or self.concave:
            for (x0, y0), (x1, y1), (x2, y2) in zip(
                zip(xs, ys), zip(xs[1:], ys[1:]), zip(xs[2:], ys[2:])
            ):
                w = (x1 - x0) / (x2 - x0)
                chord = (1 - w) * y0 + w * y2
                if self.convex and y1 > chord + tol:
                    raise ValueError(f"{self.name or 'function'} declared convex but is not")
                if self.concave and y1 < chord - tol:
                    raise ValueError(f"{self.name or 'function'} declared concave but is not")

    def __call__(self, x: float) -> float:
        return float(self.fn(x))


def _domain_of(f) -> tuple:
    return f.domain if isinstance(f, ScalarFunction) else (1e-12, 1e12)


def _minimize_log_axis(g, lo: float, hi: float, grid_points: int, rel_tol: float):
    """Minimize g over [lo, hi] on a log grid, then refine by golden section.

    Returns (argmin, minimum).  Raises BracketError when the grid minimum
    sits on the boundary, i.e. no interior bracket exists.
    """
    ss = np.log(np.geomspace(lo, hi, grid_points))
    vals = np.array([g(math.exp(s)) for s in ss])
    if not np.any(np.isfinite(vals)):
        raise BracketError("objective not finite anywhere on the grid")
    i = int(np.nanargmin(vals))
    if i == 0 or i == len(ss) - 1:
        raise BracketError(
            "no interior bracket: minimum at the search boundary "
            f"(tau ~ {math.exp(ss[i]):.3g})"
        )
    h = lambda s: g(math.exp(s))
    res = optimize.minimize_scalar(
        h,
        bracket=(ss[i - 1], ss[i], ss[i + 1]),
        method="golden",
        options={"xtol": rel_tol},
    )
    return math.exp(res.x), float(res.fun)


def legendre_transform(rate, x: float, *, grid_points: int = 400,
                       rel_tol: float = 1e-10) -> float:
    """inf over tau of (x tau + rate(tau)): the minimal exponential cost.

    The result, as a function of x, is non-decreasing and concave.  The rate
    function should be decreasing with a pole at 0+ so the infimum is
    interior.
    """
    if x <= 0:
        raise ValueError("argument must be positive")
    lo, hi = _domain_of(rate)
    _, val = _minimize_log_axis(lambda t: x * t + rate(t), lo, hi, grid_points, rel_tol)
    return val


def legendre_conjugate(target, x: float, *, grid_points: int = 400,
                       rel_tol: float = 1e-10) -> float:
    """sup over tau of (target(tau) - x tau): the matching rate function.

    For sublinear non-decreasing targets the supremum is attained in the
    interior; composing the two transforms recovers a concave target exactly
    and dominates any other.
    """
    if x <= 0:
        raise ValueError("argument must be positive")
    lo, hi = _domain_of(target)
    _, val = _minimize_log_axis(lambda t: x * t - target(t), lo, hi, grid_points, rel_tol)
    return -val


def kohlbecker_transform(rate, x: float, *, grid_points: int = 400,
                         rel_tol: float = 1e-10) -> float:
    """Log-Laplace cost: -log integral of e^(-x t) against d(e^(-rate)).

    Evaluated as value = L - log(x I) with L the Legendre transform value
    and I the integral of exp(-(x t + rate(t) - L)) dt, so the quadrature
    runs on an O(1) integrand peaked near the Legendre minimizer.  The two
    transforms agree to first order as x grows.
    """
    if x <= 0:
        raise ValueError("argument must be positive")
    lo, hi = _domain_of(rate)
    tau_star, gmin = _minimize_log_axis(
        lambda t: x * t + rate(t), lo, hi, grid_points, rel_tol
    )

    # integrate in log coordinates around the minimizer: the substitution
    # t = tau* e^s makes the integrand O(1) at s = 0 and decaying both ways
    def integrand(s):
        if s > 690.0:  # x t alone dwarfs the s credit out here
            return 0.0
        t = tau_star * math.exp(s)
        if t <= 0.0 or not math.isfinite(t):
            return 0.0
        v = x * t + rate(t) - gmin - s
        return math.exp(-v) if v < 700 else 0.0

    pieces, errors = [], []
    for a, b in ((-np.inf, 0.0), (0.0, np.inf)):
        val, err = integrate.quad(integrand, a, b, limit=300, epsabs=0.0, epsrel=1e-10)
        pieces.append(val)
        errors.append(err)
    total = tau_star * math.fsum(pieces)
    if total <= 0 or math.fsum(errors) > 1e-6 * math.fsum(pieces):
        raise QuadratureError("transform integral did not converge")
    return gmin - math.log(x * total)


def biconjugate_transform(target, x: float, *, grid_points: int = 200,
                          rel_tol: float = 1e-10) -> float:
    """Transform of the conjugate: dominates the target, equals it if concave.

    The target's declared domain must cover the inner optima, which sit
    roughly at the derivative-matching points of the outer arguments.
    """
    rate = lambda y: legendre_conjugate(target, y, grid_points=grid_points,
                                        rel_tol=rel_tol)
    return legendre_transform(rate, x, grid_points=grid_points, rel_tol=rel_tol)


# ---------------------------------------------------------------------------
# Closed forms for reference columns
# ---------------------------------------------------------------------------

def reference_rate(kind: str, param: float, depth: int = 1) -> ScalarFunction:
    """Classical rate functions with known transform asymptotics."""
    if kind == "log_power":
        return ScalarFunction(
            lambda s: math.log(1.0 / s) ** param if s < 1 else 0.0,
            name=f"log_power({param})", domain=(1e-12, 0.99), decreasing=True,
        )
    if kind == "inverse_power":
        return ScalarFunction(
            lambda s: s**-param, name=f"inverse_power({param})",
            domain=(1e-12, 1e12), decreasing=True,
        )
    if kind == "iterated_exp":
        return ScalarFunction(
            lambda s: iterated_exp(s**-param, depth),
            name=f"iterated_exp(depth={depth}, nu={param})",
            domain=(1e-6, 1e6), decreasing=True,
        )
    raise ValueError(f"unknown rate kind {kind!r}")


def reference_transform(kind: str, param: float, depth: int = 1):
    """Closed-form transform of the matching reference rate."""
    if kind == "log_power":
        return lambda x: math.log(x) ** param
    if kind == "inverse_power":
        exponent = param / (1.0 + param)
        const = (1.0 + param) / param**exponent
        return lambda x: const * x**exponent
    if kind == "iterated_exp":
        return lambda x: x / iterated_log(x, depth) ** (1.0 / param)
    raise ValueError(f"unknown rate kind {kind!r}")


# ---------------------------------------------------------------------------
# Coefficient designers
# ---------------------------------------------------------------------------

class DesignedSequence(TailSequence):
    """Tail rule solved from a rate function, with a geometric head."""

    def __init__(self, *, provenance: dict, **kwargs):
        self.provenance = provenance
        super().__init__(**kwargs)

    def describe(self) -> str:
        return f"designed({self.provenance.get('target', '?')})"


def sequence_from_tail_rule(tower: Tower, sigma_fn, *, k0: Optional[int] = None,
                            head_ratio: float = 0.5,
                            provenance: Optional[dict] = None) -> DesignedSequence:
    """Build a coefficient sequence from a tail rule valid at deep levels.

    The rule is used from the first level where it gives tails below 1/2
    (recorded as k0); the remaining head mass is spread over earlier levels
    proportionally to a geometric profile so all weights stay positive.
    """
    def probe(k):
        try:
            v = sigma_fn(k)
        except (ValueError, ArithmeticError):
            return None
        return v if (v is not None and 0.0 < v < 1.0) else None

    if k0 is None:
        k0 = 1
        while True:
            prev, cur = probe(k0 - 1), probe(k0)
            if prev is not None and cur is not None and cur < 0.5:
                break
            k0 += 1
            if k0 > 512:
                raise ValueError("tail rule never drops below 1/2")
    if k0 < 1:
        raise ValueError("k0 must be >= 1")

    anchor = sigma_fn(k0 - 1)
    deficit = 1.0 - anchor
    weights = [head_ratio ** (j + 1) for j in range(k0)]
    scale = deficit / math.fsum(weights)
    head = tuple(w * scale for w in weights)

    @lru_cache(maxsize=None)
    def ruled(k: int) -> float:
        val = float(sigma_fn(k))
        if not 0.0 < val < 1.0:
            raise ValueError(f"tail rule left (0,1) at level {k}: {val}")
        return val

    return DesignedSequence(
        sigma_fn=ruled,
        head=head,
        description=(provenance or {}).get("label", "designed"),
        provenance=dict(provenance or {}, k0=k0),
    )


def _invert_decreasing(fn, y: float, *, hi: float = 1.0) -> float:
    """Solve fn(s) = y for a continuous decreasing fn by bisection in log s.

    Brackets adaptively: the lower end walks down only as far as needed, so
    numerically synthesized rate functions are never evaluated outside the
    region where their own optimizers can bracket.
    """
    def probe(s: float) -> float:
        # synthesized rates can fail to bracket where their value is
        # negligible; on the high side that simply means "below target"
        try:
            return fn(s)
        except (ValueError, ArithmeticError):
            return -math.inf

    f_hi = probe(hi)
    while f_hi > y:
        hi *= 4.0
        if hi > 1e12:
            raise ValueError("inversion bracket ran away upward")
        f_hi = probe(hi)
    lo = hi / 4.0
    while True:
        try:
            f_lo = fn(lo)
        except (ValueError, ArithmeticError) as exc:
            raise ValueError(f"rate function not evaluable near {lo:.3g}: {exc}") from exc
        if f_lo >= y:
            break
        lo /= 16.0
        if lo < 1e-280:
            raise ValueError("rate function too small near zero to reach target")
    llo, lhi = math.log(lo), math.log(hi)
    for _ in range(200):
        mid = 0.5 * (llo + lhi)
        if probe(math.exp(mid)) >= y:
            llo = mid
        else:
            lhi = mid
        if lhi - llo < 1e-13 * max(1.0, abs(lhi)):
            break
    return math.exp(0.5 * (llo + lhi))


def _solve_tail_rule(tower: Tower, rate) -> Callable[[int], float]:
    """Tails solving rate(tail(k)) = log volume(k), decreasing in k."""

    @lru_cache(maxsize=None)
    def sigma(k: int) -> float:
        y = tower.log_volume(k)
        if y <= 0.0:
            raise ValueError("volume 1 level: rate equation has no target")
        return _invert_decreasing(rate, y)

    return sigma


def design_fast_decay(tower: Tower, target, *, rate=None,
                      label: str = "fast") -> DesignedSequence:
    """Coefficients whose return probability beats the target decay.

    ``target`` is the decay profile F (non-decreasing, sublinear).  When no
    rate function is supplied one is synthesized as the conjugate of
    sqrt(id * F), whose transform outgrows F.  Tails solve
    rate(tail) = log volume.
    """
    if rate is None:
        boosted = ScalarFunction(
            lambda t: math.sqrt(t * max(target(t), 0.0)),
            name="sqrt(id*target)", domain=(1e-10, 1e14), increasing=True,
        )
        rate = lambda s: legendre_conjugate(boosted, s, grid_points=160)
    sigma = _solve_tail_rule(tower, rate)
    return sequence_from_tail_rule(
        tower, sigma,
        provenance={"target": "fast", "label": f"designed_fast({label})"},
    )


def design_slow_decay(tower: Tower, target, *, rate=None,
                      label: str = "slow") -> DesignedSequence:
    """Coefficients whose return probability decays slower than the target.

    The synthesized rate function is the conjugate of the concave transfer
    sqrt(F); its transform is asymptotically negligible against F.  The
    transfer's concavity is spot-checked.
    """
    if rate is None:
        damped = ScalarFunction(
            lambda t: math.sqrt(max(target(t), 0.0)),
            name="sqrt(target)", domain=(1e-10, 1e14),
            increasing=True, concave=True,
        )
        rate = lambda s: legendre_conjugate(damped, s, grid_points=160)
    sigma = _solve_tail_rule(tower, rate)
    return sequence_from_tail_rule(
        tower, sigma,
        provenance={"target": "slow", "label": f"designed_slow({label})"},
    )


@dataclass(frozen=True)
class TrendReport:
    ns: tuple
    ratios: tuple          # -log p(n) / target(n)
    direction: str         # "increasing" | "decreasing" | "mixed"
    settle_index: int      # first grid index from which the trend is monotone

    @property
    def monotone_from(self) -> float:
        return self.ns[self.settle_index]


def decay_trend_report(seq: CoefficientSequence, tower: Tower, target,
                       ns: Sequence[float]) -> TrendReport:
    """Evaluate -log p(n)/target(n) on a grid and report its trend.

    Designers promise a monotone trend beyond some threshold rather than a
    limit; the report makes the realized grid and threshold explicit.
    """
    from .spectral import StepSpectralDistribution

    dist = StepSpectralDistribution(seq, tower)
    ns = tuple(float(n) for n in ns)
    ratios = tuple(-dist.log_return_probability(n) / float(target(n)) for n in ns)
    diffs = [b - a for a, b in zip(ratios, ratios[1:])]
    if all(d > 0 for d in diffs):
        direction, settle = "increasing", 0
    elif all(d < 0 for d in diffs):
        direction, settle = "decreasing", 0
    else:
        # the trend is read off the final monotone run
        last_sign = diffs[-1] > 0
        settle = 0
        for i in range(len(diffs) - 1, -1, -1):
            if (diffs[i] > 0) != last_sign:
                settle = i + 1
                break
        direction = "increasing" if last_sign else "decreasing"
        if settle >= len(diffs):
            direction = "mixed"
    return TrendReport(ns, ratios, direction, settle)
