import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import towerwalk as tw


@pytest.fixture(scope="module")
def dist(dyadic):
    tower, seq = dyadic
    return tw.StepSpectralDistribution(seq, tower)


def test_value_examples(dist):
    assert dist.value_at(1 / 8) == 0.25
    assert dist.value_at(0.3) == 0.5
    assert dist.value_at(1.0) == 1.0
    assert dist.value_at(0.0) == 0.0
    assert dist.value_at(-1.0) == 0.0


def test_left_value(dist, dyadic):
    _, seq = dyadic
    # left limit drops to the next level exactly at a jump
    assert dist.left_value_at(seq.tail(1)) == 0.25
    assert dist.value_at(seq.tail(1)) == 0.5
    assert dist.left_value_at(0.3) == dist.value_at(0.3)


def test_jump_mass_identity(dist, dyadic, factorial_tails):
    tower, seq = dyadic
    for k in range(25):
        assert dist.value_at(seq.tail(k)) * tower.volume(k) == pytest.approx(1.0, rel=1e-13)
    ftower, fseq = factorial_tails
    fdist = tw.StepSpectralDistribution(fseq, ftower)
    for k in range(12):
        assert fdist.value_at(fseq.tail(k)) * ftower.volume(k) == pytest.approx(1.0, rel=1e-12)


@settings(max_examples=150, deadline=None)
@given(st.floats(1e-9, 1.0, allow_nan=False))
def test_quantile_galois(y):
    tower, seq = tw.PowersOfTwoTower(), tw.GeometricSequence(0.5)
    dist = tw.StepSpectralDistribution(seq, tower)
    lam = dist.quantile(y)
    assert dist.value_at(lam) >= y - 1e-15
    # anything strictly below the quantile has mass below y
    assert dist.value_at(lam * (1 - 1e-12)) < y + 1e-15


def test_quantile_rejects_bad_levels(dist):
    for y in (0.0, -0.5, 1.5):
        with pytest.raises(ValueError):
            dist.quantile(y)


def test_spectrum_points(dist, factorial_tails):
    assert dist.jump_points(2) == [0.5, 0.25, 0.125]
    assert dist.accumulates_at_zero
    ftower, fseq = factorial_tails
    fdist = tw.StepSpectralDistribution(fseq, ftower)
    assert fdist.jump_points(1) == pytest.approx([0.5, 1 / 6], rel=1e-15)
    assert tw.StepSpectralDistribution(tw.GeometricSequence(0.3), tw.PowersOfTwoTower()).jump_points(0) == [0.7]


def test_return_probability_values(dist):
    assert dist.return_probability(1.0) == pytest.approx(2 / 3, abs=1e-13)
    assert dist.return_probability(2.0) == pytest.approx(10 / 21, abs=1e-13)
    ts = np.geomspace(1.0, 1e5, 40)
    ps = [dist.return_probability(float(t)) for t in ts]
    assert all(b <= a + 1e-15 for a, b in zip(ps, ps[1:]))


def test_return_probability_linear_regime(dist):
    for t in np.geomspace(1e3, 1e6, 13):
        assert 0.5 <= dist.return_probability(float(t)) * t <= 2.5


def test_log_return_probability_consistent(dist):
    for t in (1.0, 7.0, 300.0, 1e5):
        assert dist.log_return_probability(t) == pytest.approx(
            math.log(dist.return_probability(t)), abs=1e-10
        )


def test_log_return_probability_convex(dist):
    ts = np.linspace(1.0, 200.0, 80)
    lp = np.array([dist.log_return_probability(float(t)) for t in ts])
    assert np.all(np.diff(lp, 2) >= -1e-9)


def test_decay_rate(dist):
    assert dist.decay_rate(1e4) <= 1e-2
    t = 37.0
    assert dist.decay_rate(t) == pytest.approx(-dist.log_return_probability(t) / t, rel=1e-14)
    with pytest.raises(ValueError):
        dist.decay_rate(0.0)


def test_decay_rate_polynomial_regime():
    # weights ~ k^(-p): the rate falls like t^(-(p-1)/p), so the product
    # with that power stays in a fixed band
    p = 2.0
    tower, seq = tw.PowersOfTwoTower(), tw.PolynomialSequence(p)
    dist = tw.StepSpectralDistribution(seq, tower)
    vals = [dist.decay_rate(float(t)) * t ** ((p - 1) / p)
            for t in np.geomspace(1e2, 1e6, 9)]
    assert max(vals) / min(vals) < 6.0


def test_heat_kernel_examples(dist):
    assert dist.heat_kernel(1.0, rho=3.0) == pytest.approx(1 / 24, abs=1e-14)
    for t in (1.0, 9.5, 120.0):
        assert dist.heat_kernel(t, rho=0.0) == pytest.approx(dist.return_probability(t), rel=1e-12)
    vals = [dist.heat_kernel(5.0, level=k) for k in range(12)]
    assert all(b <= a + 1e-16 for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        dist.heat_kernel(1.0, rho=2.5)  # foreign metric value
    with pytest.raises(ValueError):
        dist.heat_kernel(1.0)


def test_heat_kernel_is_probability_density(dyadic):
    tower, seq = dyadic
    K = 9
    trunc = tw.FiniteTruncatedTower(tower, K)
    folded = tw.fold_truncation(seq, K)
    fdist = tw.StepSpectralDistribution(folded, trunc)
    for t in (0.5, 1.0, 2.7, 40.0):
        total = 0.0
        for k in range(K + 1):
            shell = trunc.volume(k) - (trunc.volume(k - 1) if k else 0)
            total += shell * fdist.heat_kernel(t, level=k)
        assert total == pytest.approx(1.0, abs=1e-10)


def test_heat_kernel_band_contains_kernel(dist):
    rng = np.random.default_rng(17)
    for _ in range(400):
        t = float(np.exp(rng.uniform(0.0, math.log(1e4))))
        k = int(rng.integers(0, 22))
        band = dist.heat_kernel_band(max(t, 1.0), level=k)
        h = dist.heat_kernel(max(t, 1.0), level=k)
        assert band.lower <= h <= band.upper
        assert band.diagnostics["case"] in ("short_time", "long_time")


def test_heat_kernel_band_zero_distance_floor(dist, dyadic):
    _, seq = dyadic
    floor_const = (1 - seq.tail(0)) ** 2 / (2 * math.e**2)
    for t in (2.0, 10.0, 1e3):
        band = dist.heat_kernel_band(t, level=0)
        assert band.lower >= floor_const * dist.value_at(1.0 / t) * (1 - 1e-9)
    with pytest.raises(ValueError):
        dist.heat_kernel_band(0.5, level=0)


def test_heat_kernel_band_far_field(dist, dyadic):
    # bounded time, growing distance: the band tracks t/(1+rho) N(1/(1+rho))
    _, seq = dyadic
    for k in (8, 12, 16):
        rho = tw.level_radius(seq, k)
        band = dist.heat_kernel_band(2.0, level=k)
        scale = 2.0 / (1 + rho) * dist.value_at(1.0 / (1 + rho))
        assert band.upper <= scale * (1 + 1e-9)
        assert band.lower >= scale * math.exp(-2.0) / 4.0 * (1 - 1e-9)


def test_supnorm_power_bound(dist, dyadic):
    tower, seq = dyadic
    assert dist.supnorm_power_bound(0) == pytest.approx(1.0, rel=1e-12)
    # direct 60-term evaluation of the same Stieltjes sum
    direct = math.fsum(
        math.exp(-seq.tail(k)) * (1 / tower.volume(k) - 1 / tower.volume(k + 1))
        for k in range(60)
    )
    assert dist.supnorm_power_bound(1) == pytest.approx(direct, rel=1e-12)
    delta = 1.0 / (1.0 - seq.tail(0))
    for n in (1, 4, 16, 100, 1000):
        bound = dist.supnorm_power_bound(n)
        p = dist.return_probability(float(n))
        assert p <= bound * (1 + 1e-12)
        assert bound >= p * math.exp(-seq.tail(0))
        # dilation consistency: the bound at time delta*n undershoots p(n)
        assert dist.supnorm_power_bound(delta * n) <= p * (1 + 1e-12)


# -- recurrence ----------------------------------------------------------------

def test_recurrence_analytic_verdicts(factorial_tails, factorial_geometric):
    z2 = tw.PowersOfTwoTower()
    for q, want in [(0.3, "recurrent"), (0.5, "recurrent"),
                    (0.7, "transient"), (0.9, "transient")]:
        rep = tw.classify_recurrence(tw.GeometricSequence(q), z2)
        assert rep.verdict == want and rep.basis == "analytic"

    ftower, fseq = factorial_tails
    rep = tw.classify_recurrence(fseq, ftower)
    assert rep.verdict == "recurrent"
    # exact reciprocal terms grow quadratically: volume ratio times (k+1)(k+2)
    terms = rep.exact_terms
    assert terms[3] > terms[1] > terms[0]

    gtower, gseq = factorial_geometric
    assert tw.classify_recurrence(gseq, gtower).verdict == "transient"

    assert tw.classify_recurrence(tw.PolynomialSequence(2.0), z2).verdict == "transient"


def test_recurrence_finite_group(dyadic):
    tower, seq = dyadic
    trunc = tw.FiniteTruncatedTower(tower, 6)
    rep = tw.classify_recurrence(tw.fold_truncation(seq, 6), trunc)
    assert rep.verdict == "recurrent" and rep.basis == "finite_group"


def test_recurrence_envelope_paths():
    z2 = tw.PowersOfTwoTower()
    # tails 1/((k+3) 2^k): reciprocal terms are k+3, growing -> recurrent
    growing = tw.TailSequence(
        sigma_fn=lambda k: 1.0 / ((k + 3) * 2.0**k),
        description="sub-reciprocal tails",
    )
    rep = tw.classify_recurrence(growing, z2)
    assert rep.verdict == "recurrent" and rep.basis == "envelope"

    # tails (k+2)/2^(k+1): reciprocal terms decay harmonically (the series
    # truly diverges, but neither finite-horizon envelope certifies it)
    harmonic = tw.TailSequence(
        sigma_fn=lambda k: (k + 2) / 2.0 ** (k + 1),
        description="harmonic reciprocal terms",
    )
    rep = tw.classify_recurrence(harmonic, z2)
    assert rep.verdict == "inconclusive"


def test_lawler_report(dyadic):
    tower, seq = dyadic
    from towerwalk.measure import mass_outside_subgroup

    vols = [tower.volume(k) for k in range(30)]
    outside = [mass_outside_subgroup(seq, tower, k) for k in range(30)]
    rep = tw.lawler_divergence_report(vols, outside)
    assert rep["sufficient_condition_met"]
    assert rep["partial_sum"] > 50.0  # terms are ~ 3 each


def test_recurrence_crosscheck_against_decay(dist):
    # integral-trend proxy: slope of log p flatter than -1 matches divergence
    rep = tw.classify_recurrence(tw.GeometricSequence(0.5), tw.PowersOfTwoTower())
    ts = np.geomspace(10, 1e6, 25)
    slope = np.polyfit(np.log(ts), [dist.log_return_probability(float(t)) for t in ts], 1)[0]
    assert (slope >= -1.0) == (rep.verdict == "recurrent")
