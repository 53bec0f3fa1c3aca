"""Canonical tower/sequence pairings used by tests, the validator and docs."""

from __future__ import annotations

import math

from .measure import GeometricSequence, TailSequence
from .tower import FactorialTower, PowersOfTwoTower


def dyadic_geometric(q: float = 0.5):
    """Bit-vector tower with geometric weights; tails halve per level."""
    return PowersOfTwoTower(), GeometricSequence(q)


def factorial_tail_sequence() -> TailSequence:
    """Tails 1/(k+2)! - factorially fast, so the tail-regularity bound fails."""
    return TailSequence(
        sigma_fn=lambda k: 1.0 / math.factorial(k + 2),
        log_sigma_fn=lambda k: -math.lgamma(k + 3),
        description="factorial tails 1/(k+2)!",
        declared_regularity=(False, math.inf),
        declared_recurrence={"factorial": "recurrent"},
    )


def symmetric_factorial_tails():
    """Permutation tower with factorial tails (volume-comparable decay)."""
    return FactorialTower(), factorial_tail_sequence()


def symmetric_geometric(q: float = 0.5):
    """Permutation tower with geometric weights (slow decay vs volume)."""
    return FactorialTower(), GeometricSequence(q)
