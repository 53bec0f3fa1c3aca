"""Brute-force ground truth on truncated towers.

Everything here works with dense probability vectors over a full enumeration
of the frozen group, so convolution powers, truncated-operator eigenvalues
and eigenfunction residuals are exact up to float rounding.  It exists to
validate the series formulas, not to be fast.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .measure import CoefficientSequence, fold_truncation
from .tower import (
    FactorialTower,
    FiniteTruncatedTower,
    GroupElement,
    PowersOfTwoTower,
    Tower,
)


class Enumeration:
    """Index <-> element dictionary for a frozen tower, plus fast products."""

    size: int
    tower: FiniteTruncatedTower
    top_level: int

    def element(self, i: int) -> GroupElement:
        raise NotImplementedError

    def index(self, x: GroupElement) -> int:
        raise NotImplementedError

    def min_levels(self) -> np.ndarray:
        raise NotImplementedError

    def left_inverse_row(self, y: int) -> np.ndarray:
        """Indices of y^-1 x for all x; the gather row used by convolution."""
        raise NotImplementedError


class BitVectorEnumeration(Enumeration):
    """All bit masks below 2^top_level; index equals payload."""

    def __init__(self, tower: FiniteTruncatedTower):
        if not isinstance(tower.base, PowersOfTwoTower):
            raise TypeError("bit-vector enumeration needs a powers-of-two base")
        self.tower = tower
        self.top_level = tower.top_level
        self.size = tower.volume(tower.top_level)
        self._xs = np.arange(self.size, dtype=np.int64)

    def element(self, i: int) -> GroupElement:
        return GroupElement(self.tower, int(i), int(i).bit_length())

    def index(self, x: GroupElement) -> int:
        return x.payload

    def min_levels(self) -> np.ndarray:
        out = np.zeros(self.size, dtype=np.int64)
        for k in range(1, self.top_level + 1):
            out[1 << (k - 1) : 1 << k] = k
        return out

    def left_inverse_row(self, y: int) -> np.ndarray:
        return np.bitwise_xor(self._xs, y)


class PermutationEnumeration(Enumeration):
    """Lexicographically ranked permutations of the frozen symmetric group."""

    def __init__(self, tower: FiniteTruncatedTower):
        if not isinstance(tower.base, FactorialTower):
            raise TypeError("permutation enumeration needs a factorial base")
        self.tower = tower
        self.top_level = tower.top_level
        self.symbols = tower.top_level + 1  # level k freezes at k+1 symbols
        self.size = tower.volume(tower.top_level)
        self._perms = list(itertools.permutations(range(self.symbols)))
        self._rank = {p: i for i, p in enumerate(self._perms)}
        self._row_cache = {}

    def element(self, i: int) -> GroupElement:
        images = list(self._perms[i])
        while images and images[-1] == len(images) - 1:
            images.pop()
        payload = tuple(images)
        level = 0 if not payload else len(payload) - 1
        return GroupElement(self.tower, payload, level)

    def _full(self, x: GroupElement) -> tuple:
        p = list(x.payload)
        return tuple(p + list(range(len(p), self.symbols)))

    def index(self, x: GroupElement) -> int:
        return self._rank[self._full(x)]

    def min_levels(self) -> np.ndarray:
        out = np.zeros(self.size, dtype=np.int64)
        for i, p in enumerate(self._perms):
            top = 0
            for j in range(self.symbols - 1, -1, -1):
                if p[j] != j:
                    top = j
                    break
            out[i] = max(0, top)  # largest moved symbol j sits at level j
        return out

    def left_inverse_row(self, y: int) -> np.ndarray:
        row = self._row_cache.get(y)
        if row is None:
            p = self._perms[y]
            inv = [0] * self.symbols
            for i, image in enumerate(p):
                inv[image] = i
            # (y^-1 x)[i] = inv[x[i]]
            row = np.fromiter(
                (self._rank[tuple(inv[s] for s in x)] for x in self._perms),
                dtype=np.int64,
                count=self.size,
            )
            self._row_cache[y] = row
        return row


def enumerate_tower(tower: FiniteTruncatedTower) -> Enumeration:
    if isinstance(tower.base, PowersOfTwoTower):
        return BitVectorEnumeration(tower)
    if isinstance(tower.base, FactorialTower):
        return PermutationEnumeration(tower)
    raise TypeError(f"no enumeration for tower kind {tower.base.kind!r}")


# ---------------------------------------------------------------------------
# Dense distributions
# ---------------------------------------------------------------------------

@dataclass
class DenseDistribution:
    """A probability vector over a full enumeration of the frozen group."""

    enum: Enumeration
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.shape != (self.enum.size,):
            raise ValueError("probability vector does not match the enumeration")
        if np.any(self.probs < -1e-15):
            raise ValueError("negative probabilities")
        if abs(float(self.probs.sum()) - 1.0) > 1e-13:
            raise ValueError("probabilities must sum to 1")

    def at_identity(self) -> float:
        return float(self.probs[self.enum.index(self.enum.tower.identity())])

    def shell_masses(self) -> np.ndarray:
        levels = self.enum.min_levels()
        out = np.zeros(self.enum.top_level + 1)
        np.add.at(out, levels, self.probs)
        return out


def uniform_on_level(enum: Enumeration, k: int) -> DenseDistribution:
    levels = enum.min_levels()
    mask = levels <= k
    probs = mask / mask.sum()
    return DenseDistribution(enum, probs)


def delta_at(enum: Enumeration, x: GroupElement) -> DenseDistribution:
    probs = np.zeros(enum.size)
    probs[enum.index(x)] = 1.0
    return DenseDistribution(enum, probs)


def dense_measure(enum: Enumeration, seq: CoefficientSequence) -> DenseDistribution:
    """Materialize the level-averaged measure of a finitely supported sequence."""
    if seq.support is None:
        raise ValueError("fold the sequence first (dense measures are finite)")
    if seq.support > enum.top_level:
        raise ValueError("sequence support exceeds the frozen tower")
    levels = enum.min_levels()
    shell_value = np.zeros(enum.top_level + 1)
    for k in range(seq.support, -1, -1):
        above = shell_value[k + 1] if k + 1 <= seq.support else 0.0
        shell_value[k] = above + seq.coeff(k) / enum.tower.volume(k)
    probs = shell_value[np.minimum(levels, seq.support)]
    probs[levels > seq.support] = 0.0
    return DenseDistribution(enum, probs)


def convolve(a: DenseDistribution, b: DenseDistribution) -> DenseDistribution:
    """(a * b)(x) = sum_y a(y) b(y^-1 x); exact group convolution."""
    if a.enum is not b.enum:
        raise ValueError("enumeration mismatch")
    enum = a.enum
    out = np.zeros(enum.size)
    for y in np.nonzero(a.probs)[0]:
        out += a.probs[y] * b.probs[enum.left_inverse_row(int(y))]
    return DenseDistribution(enum, out)


def convolution_power(mu: DenseDistribution, n: int) -> DenseDistribution:
    if n < 1:
        raise ValueError("n must be >= 1")
    out = mu
    for _ in range(n - 1):
        out = convolve(out, mu)
    return out


# ---------------------------------------------------------------------------
# Truncated-operator eigenvalues
# ---------------------------------------------------------------------------

def _apply_truncated(mu: DenseDistribution, mask: np.ndarray, f: np.ndarray) -> np.ndarray:
    """P_U f: restrict, convolve with the step law, restrict again."""
    enum = mu.enum
    g = np.where(mask, f, 0.0)
    out = np.zeros(enum.size)
    for y in np.nonzero(g)[0]:
        out += g[y] * mu.probs[enum.left_inverse_row(int(y))]
    return np.where(mask, out, 0.0)


def dirichlet_gap(subset: Sequence[int], mu: DenseDistribution,
                  tol: float = 1e-12, max_iter: int = 100_000) -> float:
    """Smallest truncated-Laplacian eigenvalue on a finite index set.

    One minus the norm of the truncated step operator, found by power
    iteration on the half-shifted operator (I + P_U)/2, which is positive
    semidefinite with the same top eigenvector.  For moderate subsets the
    operator is materialized on the subset once; very large subsets use the
    matrix-free apply.
    """
    enum = mu.enum
    idx = np.unique(np.asarray(list(subset), dtype=np.int64))
    if idx.size == 0:
        raise ValueError("subset must be nonempty")

    if idx.size <= 2048:
        # restricted matrix A[x, y] = mu(y^-1 x) for x, y in the subset
        pos = {int(g): i for i, g in enumerate(idx)}
        A = np.empty((idx.size, idx.size))
        for j, y in enumerate(idx):
            A[:, j] = mu.probs[enum.left_inverse_row(int(y))][idx]
        apply_op = lambda f: A @ f
        v = np.ones(idx.size)
    else:
        mask = np.zeros(enum.size, dtype=bool)
        mask[idx] = True
        apply_op = lambda f: _apply_truncated(mu, mask, f)
        v = mask.astype(float)

    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        w = 0.5 * (v + apply_op(v))
        nu = float(v @ w)
        residual = float(np.linalg.norm(w - nu * v))
        norm_w = float(np.linalg.norm(w))
        if norm_w == 0.0:
            return 1.0  # operator annihilates the cone: gap is maximal
        v = w / norm_w
        if residual <= tol:
            return 2.0 * (1.0 - nu)
    raise ArithmeticError(f"power iteration did not converge in {max_iter} steps")


def subgroup_indices(enum: Enumeration, k: int) -> np.ndarray:
    return np.nonzero(enum.min_levels() <= k)[0]


# ---------------------------------------------------------------------------
# Eigenfunctions of the level projections
# ---------------------------------------------------------------------------

def level_projection_eigenfunction(enum: Enumeration, k: int,
                                   a: GroupElement) -> np.ndarray:
    """Difference of coset indicators around level k, centered at a.

    These span the eigenspace of the Laplacian at the k-th tail eigenvalue;
    they are supported on a's level-(k+1) coset and sum to zero.
    """
    if k + 1 > enum.top_level:
        raise ValueError("need k+1 within the frozen tower")
    tower = enum.tower
    levels = enum.min_levels()
    # x is in a's level-l coset iff a^-1 x lies in the level-l subgroup
    rel = enum.left_inverse_row(enum.index(a))
    member_levels = levels[rel]
    f = np.zeros(enum.size)
    f[member_levels <= k] += 1.0 / tower.volume(k)
    f[member_levels <= k + 1] -= 1.0 / tower.volume(k + 1)
    return f


def eigenfunction_residual(mu: DenseDistribution, seq: CoefficientSequence,
                           k: int, a: GroupElement) -> float:
    """Relative residual of the level-k eigenfunction under the Laplacian."""
    enum = mu.enum
    f = level_projection_eigenfunction(enum, k, a)
    # (-Delta) f = f - f * mu
    conv = np.zeros(enum.size)
    for y in np.nonzero(f)[0]:
        conv += f[y] * mu.probs[enum.left_inverse_row(int(y))]
    lhs = f - conv
    lam = seq.tail(k)
    return float(np.linalg.norm(lhs - lam * f) / np.linalg.norm(f))


def make_fixture(base: Tower, seq: CoefficientSequence, top_level: int):
    """Frozen tower + folded sequence + enumeration, ready for exact checks."""
    trunc = FiniteTruncatedTower(base, top_level)
    folded = fold_truncation(seq, top_level)
    enum = enumerate_tower(trunc)
    return trunc, folded, enum
