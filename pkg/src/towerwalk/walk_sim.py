"""Monte-Carlo simulation of the walk and exact escape statistics.

Steps are drawn in two stages: a level from the coefficient weights (inverse
transform on the tails, no materialized CDF) and then a uniform element of
that level's subgroup.  Traces are bit-reproducible from their seed, and
batch statistics are computed in fixed-size blocks whose generators derive
from (seed, block index), so results do not depend on how work is split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .measure import CoefficientSequence, semigroup_coeff
from .tower import GroupElement, PowersOfTwoTower, Tower, level_radius

_BLOCK = 8192


def sample_step_level(seq: CoefficientSequence, rng) -> int:
    """Draw a level with probability c_k via the inverted tail function."""
    u = 1.0 - rng.random()  # in (0, 1]
    return _level_from_uniform(seq, u)


def _level_from_uniform(seq: CoefficientSequence, u: float) -> int:
    # smallest k with tail(k) < u
    if u > seq.tail(0):
        return 0
    lo, hi = 0, 1
    sup = seq.support
    while not seq.tail(hi) < u:
        if sup is not None and hi >= sup:
            break
        lo = hi
        hi = 2 * hi if sup is None else min(2 * hi, sup)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if seq.tail(mid) < u:
            hi = mid
        else:
            lo = mid
    return hi


def sample_step(seq: CoefficientSequence, tower: Tower, rng) -> GroupElement:
    """One increment of the walk: level by weight, element uniform in it."""
    return tower.sample_uniform(sample_step_level(seq, rng), rng)


@dataclass(frozen=True)
class WalkTrace:
    """A simulated path, reduced to the level data that the metric sees."""

    seed: int
    step_levels: tuple
    product_levels: tuple

    @property
    def n(self) -> int:
        return len(self.step_levels)

    def distances(self, seq: CoefficientSequence) -> tuple:
        """Distance from the start after each step."""
        return tuple(level_radius(seq, k) for k in self.product_levels)


def run_walk(seq: CoefficientSequence, tower: Tower, n: int, seed: int) -> WalkTrace:
    """Simulate n steps; the trace is a pure function of (seq, tower, n, seed)."""
    if n < 1:
        raise ValueError("need at least one step")
    rng = np.random.default_rng(seed)
    position = tower.identity()
    step_levels = []
    product_levels = []
    for _ in range(n):
        step = sample_step(seq, tower, rng)
        position = tower.multiply(position, step)
        step_levels.append(step.min_level)
        product_levels.append(position.min_level)
    return WalkTrace(seed, tuple(step_levels), tuple(product_levels))


# ---------------------------------------------------------------------------
# Batched simulation
# ---------------------------------------------------------------------------

def _tail_table(seq: CoefficientSequence, depth: int) -> np.ndarray:
    sup = seq.support
    top = depth if sup is None else min(depth, sup)
    return np.array([seq.tail(k) for k in range(top + 1)])


def _sample_levels_block(seq, rng, shape, tails) -> np.ndarray:
    u = 1.0 - rng.random(shape)
    # level = count of tails >= u = first index with tail < u
    levels = np.searchsorted(-tails, -u, side="right")
    deep = levels >= tails.size
    if np.any(deep):
        flat = levels.reshape(-1)
        uf = u.reshape(-1)
        for idx in np.nonzero(deep.reshape(-1))[0]:
            flat[idx] = _level_from_uniform(seq, float(uf[idx]))
        levels = flat.reshape(shape)
    return levels


def _bit_lengths(masks: np.ndarray) -> np.ndarray:
    hi = (masks >> np.uint64(32)).astype(np.float64)
    lo = (masks & np.uint64(0xFFFFFFFF)).astype(np.float64)
    _, e_hi = np.frexp(hi)
    _, e_lo = np.frexp(lo)
    return np.where(hi > 0, e_hi + 32, e_lo).astype(np.int64)


def batch_final_levels(seq: CoefficientSequence, tower: Tower, n: int,
                       walks: int, seed: int) -> np.ndarray:
    """Minimal level of the walk position after n steps, for many walks.

    Output is independent of any parallel work split: blocks of fixed size
    use generators seeded by (seed, block index).  Bit-vector towers take a
    vectorized XOR path; other towers fall back to elementwise simulation.
    """
    if n < 1 or walks < 1:
        raise ValueError("need n >= 1 and walks >= 1")
    out = np.empty(walks, dtype=np.int64)
    fast = isinstance(tower, PowersOfTwoTower)
    tails = _tail_table(seq, 64)
    for block_idx, start in enumerate(range(0, walks, _BLOCK)):
        size = min(_BLOCK, walks - start)
        rng = np.random.default_rng(np.random.SeedSequence((seed, block_idx)))
        if fast:
            levels = _sample_levels_block(seq, rng, (size, n), tails)
            if np.any(levels > 64):
                raise RuntimeError(
                    "sampled level beyond 64 in the vectorized path; "
                    "use run_walk for such heavy tails"
                )
            bits = rng.integers(0, 2**64, size=(size, n), dtype=np.uint64)
            # top `level` bits of a uniform word are uniform; shift count
            # must stay below 64, so level 0 is zeroed separately
            shift = (64 - np.clip(levels, 1, 64)).astype(np.uint64)
            masks = bits >> shift
            masks[levels == 0] = 0
            final = np.bitwise_xor.reduce(masks, axis=1)
            out[start : start + size] = _bit_lengths(final)
        else:
            for i in range(size):
                position = tower.identity()
                for _ in range(n):
                    position = tower.multiply(position, sample_step(seq, tower, rng))
                out[start + i] = position.min_level
    return out


# ---------------------------------------------------------------------------
# Exact escape statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExitMass:
    exact: float       # time-n mass outside the level-k subgroup
    crude: float       # 1 - (1 - tail(k))^n
    envelope: float    # min(n/radius(k+1), 1)
    levels_used: int


def exit_mass(seq: CoefficientSequence, tower: Tower, n: float, k: int,
              tol: float = 1e-14) -> ExitMass:
    """Exact probability that the time-n walk sits outside level k.

    The exact series is sum_{l>k} C_l(n) (1 - v_k/v_l); the crude proxy
    drops the volume factor and the envelope is the standard min(n/r, 1)
    comparison in the next ball radius.
    """
    if n <= 0:
        raise ValueError("time must be positive")
    if k < 0:
        raise ValueError("level must be >= 0")
    from .measure import _series_caps

    stop, lumped = _series_caps(seq, tower)
    v_k = tower.volume(k)
    acc = 0.0
    l = k + 1
    while True:
        if stop is not None and l >= stop:
            if lumped:
                rest = -math.expm1(n * seq.log_partial_sum(l - 1))
            else:
                rest = semigroup_coeff(seq, l, n)
            acc += rest * (1.0 - v_k / tower.volume(l))
            break
        acc += semigroup_coeff(seq, l, n) * (1.0 - v_k / tower.volume(l))
        rest = -math.expm1(n * seq.log_partial_sum(l))
        if rest <= tol:
            break
        l += 1
    crude = -math.expm1(n * seq.log_partial_sum(k))
    r_next = level_radius(seq, k + 1)
    envelope = min(n / r_next, 1.0) if r_next > 0 else 1.0
    return ExitMass(exact=acc, crude=crude, envelope=envelope, levels_used=l)


@dataclass(frozen=True)
class Displacement:
    value: float
    divergent: bool
    mode: str
    stderr: Optional[float] = None
    walks: Optional[int] = None

    @property
    def ci95(self) -> Optional[tuple]:
        if self.stderr is None:
            return None
        return (self.value - 1.96 * self.stderr, self.value + 1.96 * self.stderr)


def mean_displacement(seq: CoefficientSequence, tower: Tower, alpha: float,
                      n: float, mode: str = "exact", *, walks: int = 100_000,
                      seed: int = 0, tol: float = 1e-12) -> Displacement:
    """Mean alpha-power of the walk's distance from its start at time n.

    Finite exactly when alpha < 1; alpha >= 1 reports divergence.  Exact
    mode sums radius increments against exit masses with a certified
    integral-test tail bound; Monte-Carlo mode returns a CLT error bar.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if n <= 0:
        raise ValueError("time must be positive")
    if alpha >= 1 and seq.support is None and tower.support_level is None:
        return Displacement(math.inf, True, mode)

    if mode == "monte_carlo":
        levels = batch_final_levels(seq, tower, int(n), walks, seed)
        radii = np.array([level_radius(seq, int(k)) for k in range(int(levels.max()) + 1)])
        values = radii[levels] ** alpha
        est = float(values.mean())
        stderr = float(values.std(ddof=1) / math.sqrt(walks))
        return Displacement(est, False, mode, stderr=stderr, walks=walks)
    if mode != "exact":
        raise ValueError(f"unknown mode {mode!r}")

    acc = 0.0
    k = 0
    prev_r_alpha = 0.0
    while True:
        r_next = level_radius(seq, k + 1)
        e_k = exit_mass(seq, tower, n, k).exact
        if math.isinf(r_next):
            break
        acc += (r_next**alpha - prev_r_alpha) * e_k
        prev_r_alpha = r_next**alpha
        sup = tower.support_level
        if sup is not None and k + 1 >= sup:
            break
        if e_k <= 0.0:
            break
        # integral-test bound on everything beyond level k (alpha < 1)
        if alpha < 1:
            bound = n * alpha / (1.0 - alpha) * r_next ** (alpha - 1.0)
            if bound <= tol * acc and k >= 4:
                break
        k += 1
    return Displacement(acc, False, "exact")
