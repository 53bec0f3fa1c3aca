import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import towerwalk as tw
from towerwalk.tower import level_of_radius, resolve_radius


def test_powers_of_two_volumes():
    t = tw.PowersOfTwoTower()
    assert t.volume(0) == 1
    assert t.volume(10) == 1024
    assert [t.volume(k) for k in range(6)] == [1, 2, 4, 8, 16, 32]


def test_factorial_volumes_strictly_increase():
    t = tw.FactorialTower()
    vols = [t.volume(k) for k in range(8)]
    assert vols[0] == 1
    # the chain walks the distinct symmetric groups: 1, 2, 6, 24, ...
    assert vols[1:] == [math.factorial(k + 1) for k in range(1, 8)]
    assert 24 in vols  # the 4-symbol group appears with its exact volume
    for a, b in zip(vols, vols[1:]):
        assert b % a == 0 and b >= 2 * a


def test_log_volume_matches_volume():
    for t in (tw.PowersOfTwoTower(), tw.FactorialTower()):
        for k in range(0, 30, 3):
            assert math.isclose(t.log_volume(k), math.log(t.volume(k)), rel_tol=1e-13)


def test_level_cap():
    t = tw.PowersOfTwoTower(level_cap=100)
    with pytest.raises(tw.LevelCapError):
        t.volume(101)


def test_custom_volumes_validation():
    tw.CustomVolumesTower([1, 2, 4, 16])
    with pytest.raises(ValueError):
        tw.CustomVolumesTower([1, 3, 4])  # 3 does not divide 4
    with pytest.raises(ValueError):
        tw.CustomVolumesTower([1, 2, 3])  # index below 2
    with pytest.raises(NotImplementedError):
        tw.CustomVolumesTower([1, 2]).identity()


def test_bitvector_group_law():
    t = tw.PowersOfTwoTower()
    e = t.identity()
    a = tw.GroupElement(t, 0b1011, 4)
    assert t.multiply(a, a) == e  # self-inverse
    x = tw.GroupElement(t, 0b1, 1)
    y = tw.GroupElement(t, 0b10, 2)
    z = t.multiply(x, y)
    assert z.payload == 0b11 and z.min_level == 2
    assert t.multiply(t.inverse(a), a) == e


def test_permutation_group_law():
    t = tw.FactorialTower()
    e = t.identity()
    swap = tw.GroupElement(t, (1, 0), 1)  # transposition of the first two symbols
    assert t.multiply(swap, swap) == e
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = t.sample_uniform(4, rng)
        b = t.sample_uniform(3, rng)
        c = t.sample_uniform(5, rng)
        left = t.multiply(t.multiply(a, b), c)
        right = t.multiply(a, t.multiply(b, c))
        assert left == right
        assert t.multiply(a, t.inverse(a)) == e
        assert t.multiply(a, b).min_level <= max(a.min_level, b.min_level)


def test_canonical_form_strips_fixed_points():
    t = tw.FactorialTower()
    el = t._element([1, 0, 2, 3, 4])
    assert el.payload == (1, 0) and el.min_level == 1
    assert t._element(range(7)) == t.identity()


def test_mixed_tower_operands_rejected():
    t1, t2 = tw.PowersOfTwoTower(), tw.FactorialTower()
    with pytest.raises(ValueError):
        t1.multiply(t1.identity(), t2.identity())


def test_sample_uniform_level_zero_is_identity():
    rng = np.random.default_rng(1)
    t = tw.PowersOfTwoTower()
    assert all(t.sample_uniform(0, rng) == t.identity() for _ in range(20))


def test_bitvector_sampling_uniformity_chi2():
    t = tw.PowersOfTwoTower()
    rng = np.random.default_rng(1234)
    draws = 100_000
    counts = np.zeros(8)
    for _ in range(draws):
        counts[t.sample_uniform(3, rng).payload] += 1
    expected = draws / 8
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    # 7 degrees of freedom, critical value at p = 0.001
    assert chi2 < 24.32


def test_permutation_sampling_uniformity():
    t = tw.FactorialTower()
    rng = np.random.default_rng(99)
    draws = 60_000
    counts = {}
    for _ in range(draws):
        p = t.sample_uniform(2, rng).payload  # 6 permutations of 3 symbols
        counts[p] = counts.get(p, 0) + 1
    assert len(counts) == 6
    p0 = 1.0 / 6.0
    sigma = math.sqrt(draws * p0 * (1 - p0))
    for c in counts.values():
        assert abs(c - draws * p0) < 3 * sigma


def test_norm_examples(dyadic):
    tower, seq = dyadic
    e = tower.identity()
    assert tw.ultrametric_norm(seq, e) == 0.0
    x1 = tw.GroupElement(tower, 0b1, 1)
    x2 = tw.GroupElement(tower, 0b10, 2)
    assert tw.ultrametric_norm(seq, x1) == 1.0   # 1/tail(0) - 1
    assert tw.ultrametric_norm(seq, x2) == 3.0   # 1/tail(1) - 1
    assert tw.ultrametric_distance(seq, e, x2) == 3.0
    assert tw.ultrametric_distance(seq, x2, x2) == 0.0


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**12 - 1), st.integers(0, 2**12 - 1), st.integers(0, 2**12 - 1))
def test_ultrametric_inequality(ma, mb, mc):
    tower, seq = tw.PowersOfTwoTower(), tw.GeometricSequence(0.5)
    mk = lambda m: tw.GroupElement(tower, m, m.bit_length())
    x, y, z = mk(ma), mk(mb), mk(mc)
    dxz = tw.ultrametric_distance(seq, x, z)
    dxy = tw.ultrametric_distance(seq, x, y)
    dyz = tw.ultrametric_distance(seq, y, z)
    assert dxz <= max(dxy, dyz) + 1e-12
    assert dxy == tw.ultrametric_distance(seq, y, x)


def test_distance_values_are_ball_radii(dyadic):
    tower, seq = dyadic
    rng = np.random.default_rng(5)
    radii = {tw.level_radius(seq, k) for k in range(16)}
    for _ in range(200):
        x = tower.sample_uniform(int(rng.integers(0, 12)), rng)
        y = tower.sample_uniform(int(rng.integers(0, 12)), rng)
        assert tw.ultrametric_distance(seq, x, y) in radii


def test_ball_examples(dyadic):
    tower, seq = dyadic
    b0 = tw.ball(tower, seq, 0.0)
    assert (b0.level, b0.volume) == (0, 1)
    b3 = tw.ball(tower, seq, 3.0)
    assert (b3.level, b3.volume) == (2, 4)
    b25 = tw.ball(tower, seq, 2.5)
    assert (b25.level, b25.volume) == (1, 2)
    assert b25.radius == 1.0


def test_ball_volume_matches_left_limit_reciprocal(dyadic):
    # 1/(1+radius) is the tail at the previous level; jump comparisons go
    # through the exact tail value (level arithmetic), never a re-derived
    # float reciprocal
    tower, seq = dyadic
    dist = tw.StepSpectralDistribution(seq, tower)
    for k in range(1, 12):
        r = tw.level_radius(seq, k)
        vol = tw.ball_volume(tower, seq, r)
        assert vol == tower.volume(k)
        assert math.isclose(vol * dist.left_value_at(seq.tail(k - 1)), 1.0,
                            rel_tol=1e-12)


def test_ball_volume_step_monotone(dyadic):
    tower, seq = dyadic
    rs = np.linspace(0.0, 40.0, 400)
    vols = [tw.ball_volume(tower, seq, float(r)) for r in rs]
    assert all(b >= a for a, b in zip(vols, vols[1:]))
    # right continuity at a jump: the knot belongs to the higher level
    r2 = tw.level_radius(seq, 2)
    assert tw.ball_volume(tower, seq, r2) == 4
    assert tw.ball_volume(tower, seq, r2 - 1e-9) == 2


def test_resolve_radius_rejects_foreign_values(dyadic):
    tower, seq = dyadic
    assert resolve_radius(tower, seq, 3.0) == 2
    assert level_of_radius(tower, seq, 2.5) == 1
    with pytest.raises(ValueError):
        resolve_radius(tower, seq, 2.5)


def test_ball_volume_order_on_comparable_tails(factorial_tails):
    # tails comparable to reciprocal volumes: ball volume grows linearly
    # in the radius on the log-log scale over deep levels
    tower, seq = factorial_tails
    ks = range(10, 41)
    log_r = [-seq.log_tail(k - 1) for k in ks]  # radius ~ 1/tail
    log_v = [tower.log_volume(k) for k in ks]
    slope = np.polyfit(log_r, log_v, 1)[0]
    assert 1 / 1.15 <= slope <= 1.15


def test_truncated_tower(dyadic):
    tower, seq = dyadic
    trunc = tw.FiniteTruncatedTower(tower, 5)
    assert trunc.volume(5) == 32 and trunc.volume(9) == 32
    assert trunc.support_level == 5
    rng = np.random.default_rng(2)
    el = trunc.sample_uniform(9, rng)
    assert el.min_level <= 5
    e = trunc.identity()
    assert trunc.multiply(el, trunc.inverse(el)) == e
