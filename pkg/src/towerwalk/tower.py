"""Increasing towers of finite groups with exact volumes and element arithmetic.

A tower is a strictly increasing chain of finite groups G_0 = {e} < G_1 < ...
indexed by level.  Two concrete realizations ship with the library: the
infinite product of order-2 cyclic groups (bit-vector elements) and the group
of finitely supported permutations of the integers (one-line permutations).
Custom towers carry exact volumes only and cannot sample or multiply elements.

The ultrametric geometry lives here as well: the norm of an element depends
only on its minimal containing level, balls are subgroup cosets, and ball
volumes are exact integers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

DEFAULT_LEVEL_CAP = 10_000


class LevelCapError(RuntimeError):
    """A computation asked for more tower levels than the configured cap.

    Hitting the cap almost always means a series truncation policy is mis-set
    rather than that the cap is too small.
    """


@dataclass(frozen=True)
class GroupElement:
    """A tower element in canonical form with its minimal level cached.

    ``payload`` is an int bitmask for bit-vector towers (bit i = coordinate
    i+1) and a tuple of 0-based one-line images, trailing fixed points
    stripped, for permutation towers.
    """

    tower: "Tower"
    payload: object
    min_level: int

    def is_identity(self) -> bool:
        return self.min_level == 0

    def __repr__(self):  # pragma: no cover - debugging aid
        return f"GroupElement({self.payload!r}, level={self.min_level})"


class Tower:
    """Base class: exact volumes, lazily materialized, plus the group law."""

    kind = "abstract"

    def __init__(self, level_cap: int = DEFAULT_LEVEL_CAP):
        self.level_cap = level_cap

    # -- volumes ---------------------------------------------------------

    @property
    def key(self):
        return (self.kind,)

    @property
    def support_level(self) -> Optional[int]:
        """Largest level of a frozen tower, None for infinite towers."""
        return None

    def _check_level(self, k: int):
        if k < 0:
            raise ValueError(f"level must be >= 0, got {k}")
        if k > self.level_cap:
            raise LevelCapError(
                f"level {k} exceeds cap {self.level_cap}; "
                "runaway truncation suspected"
            )

    def volume(self, k: int) -> int:
        raise NotImplementedError

    def log_volume(self, k: int) -> float:
        self._check_level(k)
        return math.log(self.volume(k))

    def level_of_volume(self, u) -> int:
        """Largest k with volume(k) <= u, or -1 when u < volume(0)."""
        if u < self.volume(0):
            return -1
        k = 0
        while True:
            nxt = k + 1
            sup = self.support_level
            if sup is not None and nxt > sup:
                return sup
            if self.volume(nxt) > u:
                return k
            k = nxt

    def level_of_log_volume(self, log_u: float) -> int:
        """Largest k with log volume(k) <= log_u, or -1."""
        if log_u < self.log_volume(0):
            return -1
        k = 0
        while True:
            nxt = k + 1
            sup = self.support_level
            if sup is not None and nxt > sup:
                return sup
            if self.log_volume(nxt) > log_u:
                return k
            k = nxt

    # -- elements --------------------------------------------------------

    def has_elements(self) -> bool:
        return True

    def identity(self) -> GroupElement:
        raise NotImplementedError

    def multiply(self, a: GroupElement, b: GroupElement) -> GroupElement:
        raise NotImplementedError

    def inverse(self, a: GroupElement) -> GroupElement:
        raise NotImplementedError

    def sample_uniform(self, k: int, rng) -> GroupElement:
        """Exactly uniform draw from the level-k subgroup."""
        raise NotImplementedError

    def _check_operand(self, a: GroupElement):
        if a.tower.key != self.key:
            raise ValueError(
                f"mixed-tower operand: element of {a.tower.key} used with {self.key}"
            )


class PowersOfTwoTower(Tower):
    """Tower of bit-vector groups; level k has 2^k elements.

    Elements are int bitmasks, the group law is XOR and every element is its
    own inverse.
    """

    kind = "powers_of_two"

    def volume(self, k: int) -> int:
        self._check_level(k)
        return 1 << k

    def log_volume(self, k: int) -> float:
        self._check_level(k)
        return k * math.log(2.0)

    def level_of_volume(self, u) -> int:
        if u < 1:
            return -1
        # volumes are exact powers of two; avoid float drift near knots
        if isinstance(u, int):
            return u.bit_length() - 1
        return int(math.floor(math.log2(u) + 1e-12))

    def has_elements(self) -> bool:
        return True

    def _element(self, mask: int) -> GroupElement:
        return GroupElement(self, mask, mask.bit_length())

    def identity(self) -> GroupElement:
        return self._element(0)

    def multiply(self, a, b):
        self._check_operand(a)
        self._check_operand(b)
        return self._element(a.payload ^ b.payload)

    def inverse(self, a):
        self._check_operand(a)
        return self._element(a.payload)

    def sample_uniform(self, k, rng) -> GroupElement:
        self._check_level(k)
        if k == 0:
            return self.identity()
        mask = 0
        remaining = k
        while remaining > 0:
            take = min(remaining, 32)
            mask = (mask << take) | int(rng.integers(0, 1 << take))
            remaining -= take
        return self._element(mask)


class FactorialTower(Tower):
    """Tower of finite permutation groups.

    Levels are the distinct subgroups of the finitely supported permutations
    of the integers: level 0 is trivial and level k >= 1 is the symmetric
    group on k+1 symbols, so volumes are 1, 2, 6, 24, ...  The chain is
    strictly increasing with subgroup index >= 2 at every level, which the
    spectral-gap sandwich bounds require.
    """

    kind = "factorial"

    def volume(self, k: int) -> int:
        self._check_level(k)
        return 1 if k == 0 else math.factorial(k + 1)

    def log_volume(self, k: int) -> float:
        self._check_level(k)
        return 0.0 if k == 0 else math.lgamma(k + 2)

    def has_elements(self) -> bool:
        return True

    def _element(self, images) -> GroupElement:
        images = list(images)
        while images and images[-1] == len(images) - 1:
            images.pop()
        payload = tuple(images)
        level = 0 if not payload else len(payload) - 1
        return GroupElement(self, payload, level)

    def identity(self) -> GroupElement:
        return GroupElement(self, (), 0)

    def multiply(self, a, b):
        self._check_operand(a)
        self._check_operand(b)
        p, q = a.payload, b.payload
        n = max(len(p), len(q))
        pe = list(p) + list(range(len(p), n))
        qe = list(q) + list(range(len(q), n))
        return self._element(pe[qe[i]] for i in range(n))

    def inverse(self, a):
        self._check_operand(a)
        p = a.payload
        inv = [0] * len(p)
        for i, image in enumerate(p):
            inv[image] = i
        return self._element(inv)

    def sample_uniform(self, k, rng) -> GroupElement:
        self._check_level(k)
        if k == 0:
            return self.identity()
        return self._element(int(x) for x in rng.permutation(k + 1))


class CustomVolumesTower(Tower):
    """Tower given by its exact volume sequence only; no element arithmetic.

    Volumes must divide each other with index at least 2 at every step.  A
    leading volume above 1 is accepted; the norm convention (the level-(-1)
    tail is 1) still applies.
    """

    kind = "custom"

    def __init__(self, volumes: Sequence[int], level_cap: int = DEFAULT_LEVEL_CAP):
        super().__init__(level_cap)
        vols = [int(v) for v in volumes]
        if not vols:
            raise ValueError("need at least one volume")
        if vols[0] < 1:
            raise ValueError("volumes must be positive")
        for k in range(len(vols) - 1):
            if vols[k + 1] % vols[k] != 0:
                raise ValueError(
                    f"volume {vols[k]} at level {k} does not divide {vols[k + 1]}"
                )
            if vols[k + 1] < 2 * vols[k]:
                raise ValueError(
                    f"subgroup index below 2 between levels {k} and {k + 1}"
                )
        self._volumes = vols

    @property
    def key(self):
        return (self.kind, tuple(self._volumes))

    @property
    def materialized_levels(self) -> int:
        return len(self._volumes)

    def volume(self, k: int) -> int:
        self._check_level(k)
        if k >= len(self._volumes):
            raise LevelCapError(
                f"custom tower has {len(self._volumes)} levels, level {k} requested"
            )
        return self._volumes[k]

    def has_elements(self) -> bool:
        return False

    def identity(self):
        raise NotImplementedError("custom towers carry volumes only")

    def multiply(self, a, b):
        raise NotImplementedError("custom towers carry volumes only")

    def inverse(self, a):
        raise NotImplementedError("custom towers carry volumes only")

    def sample_uniform(self, k, rng):
        raise NotImplementedError("custom towers carry volumes only")


class FiniteTruncatedTower(Tower):
    """The base tower frozen at a top level; the group stops growing there.

    All series over levels become finite sums, which is the exactness regime
    of the brute-force oracle.
    """

    kind = "finite_truncated"

    def __init__(self, base: Tower, top_level: int):
        super().__init__(base.level_cap)
        if top_level < 1:
            raise ValueError("top_level must be >= 1")
        self.base = base
        self.top_level = top_level

    @property
    def key(self):
        return (self.kind, self.base.key, self.top_level)

    @property
    def support_level(self) -> Optional[int]:
        return self.top_level

    def volume(self, k: int) -> int:
        self._check_level(k)
        return self.base.volume(min(k, self.top_level))

    def log_volume(self, k: int) -> float:
        self._check_level(k)
        return self.base.log_volume(min(k, self.top_level))

    def has_elements(self) -> bool:
        return self.base.has_elements()

    def _wrap(self, el: GroupElement) -> GroupElement:
        if el.min_level > self.top_level:
            raise ValueError("element lies outside the truncated tower")
        return GroupElement(self, el.payload, el.min_level)

    def _unwrap(self, el: GroupElement) -> GroupElement:
        self._check_operand(el)
        return GroupElement(self.base, el.payload, el.min_level)

    def identity(self) -> GroupElement:
        return self._wrap(self.base.identity())

    def multiply(self, a, b):
        return self._wrap(self.base.multiply(self._unwrap(a), self._unwrap(b)))

    def inverse(self, a):
        return self._wrap(self.base.inverse(self._unwrap(a)))

    def sample_uniform(self, k, rng) -> GroupElement:
        self._check_level(k)
        return self._wrap(self.base.sample_uniform(min(k, self.top_level), rng))


# ---------------------------------------------------------------------------
# Ultrametric geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BallDescriptor:
    """A metric ball: a coset of the level-k subgroup with exact volume."""

    center: Optional[GroupElement]
    level: int
    radius: float
    volume: int


def level_radius(seq, k: int) -> float:
    """Radius of the level-k subgroup as a ball: 1/tail(k-1) - 1.

    Level 0 is the point ball of radius 0.  Radii can overflow the float
    range for very deep levels of fast-decaying sequences; infinity is
    returned in that case.
    """
    if k < 0:
        raise ValueError("level must be >= 0")
    if k == 0:
        return 0.0
    lt = seq.log_tail(k - 1)
    if lt == -math.inf or -lt > 709.0:
        return math.inf
    return math.expm1(-lt)


def ultrametric_norm(seq, x: GroupElement) -> float:
    """Norm of an element; zero iff identity, depends only on min_level."""
    return level_radius(seq, x.min_level)


def ultrametric_distance(seq, x: GroupElement, y: GroupElement) -> float:
    """Left-invariant ultrametric distance between two elements."""
    tower = x.tower
    tower._check_operand(y)
    return ultrametric_norm(seq, tower.multiply(tower.inverse(x), y))


def level_of_radius(tower: Tower, seq, r: float) -> int:
    """Largest level whose ball radius is <= r."""
    if r < 0:
        raise ValueError("radius must be >= 0")
    k = 0
    while True:
        sup = tower.support_level
        if sup is not None and k >= sup:
            return sup
        if level_radius(seq, k + 1) > r:
            return k
        k += 1


def resolve_radius(tower: Tower, seq, rho: float) -> int:
    """Map an exact radius value back to its level.

    Radius values live in the discrete set produced by ``level_radius``; a
    value outside it signals a foreign metric and is rejected.
    """
    k = level_of_radius(tower, seq, rho)
    if level_radius(seq, k) != rho:
        raise ValueError(f"{rho!r} is not a radius of this walk's metric")
    return k


def ball(tower: Tower, seq, r: float, center: GroupElement = None) -> BallDescriptor:
    """The ball of radius r: the largest subgroup coset of radius <= r."""
    k = level_of_radius(tower, seq, r)
    return BallDescriptor(
        center=center,
        level=k,
        radius=level_radius(seq, k),
        volume=tower.volume(k),
    )


def ball_volume(tower: Tower, seq, r: float) -> int:
    """Exact number of elements in any ball of radius r."""
    return ball(tower, seq, r).volume
