import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import towerwalk as tw
from towerwalk.measure import log_shell_series, mass_outside_subgroup, weighted_tail


def test_tail_examples(dyadic, factorial_tails):
    _, geo = dyadic
    assert geo.tail(-1) == 1.0
    assert geo.tail(1) == 0.25
    assert geo.coeff(0) == 0.5
    _, fact = factorial_tails
    assert fact.tail(-1) == 1.0
    assert math.isclose(fact.coeff(1), 1.0 / 3.0, rel_tol=1e-14)
    assert fact.tail(1) == pytest.approx(1.0 / 6.0, rel=1e-15)


def test_partial_sums_complement_tails(dyadic):
    _, seq = dyadic
    for k in range(-1, 40):
        assert seq.partial_sum(k) + seq.tail(k) == pytest.approx(1.0, abs=1e-15)


def test_unit_mass_all_families():
    families = [
        tw.GeometricSequence(0.3),
        tw.PolynomialSequence(2.5),
        tw.IteratedLogSequence(1, 2.0),
        tw.IteratedLogSequence(2, 3.0),
    ]
    for seq in families:
        total = math.fsum(seq.coeff(k) for k in range(2000)) + seq.tail(1999)
        assert abs(total - 1.0) < 1e-12
        tails = [seq.tail(k) for k in range(50)]
        assert all(b < a for a, b in zip(tails, tails[1:]))
        assert all(seq.coeff(k) > 0 for k in range(50))


def test_log_tail_consistency():
    for seq in (tw.GeometricSequence(0.7), tw.PolynomialSequence(3.0),
                tw.IteratedLogSequence(1, 2.0)):
        for k in range(0, 60, 7):
            assert seq.log_tail(k) == pytest.approx(math.log(seq.tail(k)), rel=1e-12)


def test_deep_tails_stay_accurate():
    seq = tw.GeometricSequence(0.5)
    k = 996  # tail ~ 1e-300
    assert seq.log_tail(k) == pytest.approx(997 * math.log(0.5), rel=1e-15)
    assert seq.tail(k) > 0.0
    deeper = tw.GeometricSequence(0.5).log_tail(5000)  # below float underflow
    assert deeper == pytest.approx(5001 * math.log(0.5), rel=1e-15)


def test_polynomial_tail_certified_against_direct_sum():
    # independent oracle: partial sum plus an integral-test bracket, with
    # the exact normalization pi^2/6 for exponent 2
    seq = tw.PolynomialSequence(2.0)
    n_terms = 200_000
    partial = math.fsum((i + 1.0) ** -2.0 for i in range(10, n_terms))
    # remainder sum_{j >= n_terms+1} j^-2 sits between 1/(n+1) and 1/n
    lo = (partial + 1.0 / (n_terms + 1)) / (math.pi**2 / 6)
    hi = (partial + 1.0 / n_terms) / (math.pi**2 / 6)
    assert lo - 1e-13 <= seq.tail(9) <= hi + 1e-13


def test_explicit_sequence_contract():
    seq = tw.ExplicitSequence([0.5, 0.25, 0.125, 0.125])
    assert seq.support == 3
    assert seq.tail(0) == 0.5 and seq.tail(3) == 0.0
    assert seq.log_tail(3) == -math.inf
    with pytest.raises(ValueError):
        tw.ExplicitSequence([0.5, 0.4])  # mass 0.9
    with pytest.raises(ValueError):
        tw.ExplicitSequence([0.5, -0.1, 0.6])


def test_tail_sequence_consistency_checks():
    with pytest.raises(ValueError):
        tw.TailSequence(sigma_fn=lambda k: 0.9)  # not 1 at level -1
    with pytest.raises(ValueError):
        tw.TailSequence(sigma_fn=lambda k: 1.0)  # not decreasing
    with pytest.raises(ValueError):
        # head inconsistent with the rule
        tw.TailSequence(sigma_fn=lambda k: 0.5 ** (k + 1), head=(0.3,))


def test_tail_regularity_verdicts(dyadic, factorial_tails, factorial_geometric):
    _, geo = dyadic
    rep = tw.tail_regularity(geo)
    assert rep.holds and rep.analytic and rep.lam == pytest.approx(1.0)

    _, fact = factorial_tails
    rep = tw.tail_regularity(fact)
    assert not rep.holds  # coefficient/tail ratio grows linearly

    _, geo_f = factorial_geometric
    assert tw.tail_regularity(geo_f).holds  # property of the weights alone

    assert tw.tail_regularity(tw.PolynomialSequence(2.0)).holds


# -- continuous-time embedding ------------------------------------------------

def test_semigroup_coeff_examples(dyadic):
    _, seq = dyadic
    assert tw.semigroup_coeff(seq, 1, 2.0) == pytest.approx(5 / 16, rel=1e-14)
    assert tw.semigroup_coeff(seq, 2, 2.0) == pytest.approx(13 / 64, rel=1e-14)
    for k in range(12):
        assert tw.semigroup_coeff(seq, k, 1.0) == pytest.approx(seq.coeff(k), rel=1e-13)
    assert tw.semigroup_coeff(seq, 0, 1.0) == pytest.approx(seq.coeff(0), rel=1e-14)
    with pytest.raises(ValueError):
        tw.semigroup_coeff(seq, 0, 0.0)


def test_semigroup_coeffs_sum_to_one(dyadic):
    _, seq = dyadic
    for t in (0.5, 1.0, 3.7, 50.0):
        total = math.fsum(tw.semigroup_coeff(seq, k, t) for k in range(200))
        total += -math.expm1(t * seq.log_partial_sum(199))
        assert abs(total - 1.0) < 1e-12


@settings(max_examples=150, deadline=None)
@given(
    st.integers(0, 12),
    st.floats(0.1, 20.0, allow_nan=False),
    st.floats(0.1, 20.0, allow_nan=False),
)
def test_semigroup_law_in_the_level_algebra(k, t, s):
    # convolution of level-average measures keeps the larger level, so the
    # time-(t+s) coefficient must match the max-convolution of coefficients
    seq = tw.GeometricSequence(0.5)
    Sk = lambda j: math.exp(seq.log_partial_sum(j)) if j >= 0 else 0.0
    conv = tw.semigroup_coeff(seq, k, t) * Sk(k) ** s
    if k >= 1:
        conv += tw.semigroup_coeff(seq, k, s) * Sk(k - 1) ** t
    else:
        conv += 0.0
    assert conv == pytest.approx(tw.semigroup_coeff(seq, k, t + s), rel=1e-11, abs=1e-300)


def test_point_mass_examples(dyadic):
    tower, seq = dyadic
    e = tower.identity()
    assert tw.point_mass(seq, tower, 1.0, e) == pytest.approx(2 / 3, abs=1e-13)
    x = tw.GroupElement(tower, 0b10, 2)
    assert tw.point_mass(seq, tower, 1.0, x) == pytest.approx(1 / 24, abs=1e-14)
    assert tw.point_mass(seq, tower, 2.0, e) == pytest.approx(10 / 21, abs=1e-13)


def test_point_mass_constant_on_shells(dyadic):
    tower, seq = dyadic
    rng = np.random.default_rng(3)
    for k in (1, 3, 5):
        vals = set()
        for _ in range(10):
            x = tower.sample_uniform(k, rng)
            if x.min_level == k:
                vals.add(tw.point_mass(seq, tower, 1.7, x))
        assert len(vals) == 1


def test_log_shell_series_matches_linear(dyadic):
    tower, seq = dyadic
    for t, lvl in [(1.0, 0), (13.0, 2), (300.0, 0)]:
        linear = tw.point_mass(seq, tower, t, lvl)
        assert log_shell_series(seq, tower, t, lvl) == pytest.approx(
            math.log(linear), rel=1e-10
        )


def test_log_shell_series_far_below_underflow(fast_design):
    tower, seq = fast_design
    lp = log_shell_series(seq, tower, 1e5, 0)
    assert -2e4 < lp < -1e3  # stretched-exponential decay regime
    assert math.isfinite(lp)


# -- compound-Poisson rates ---------------------------------------------------

def test_poisson_rates(dyadic):
    _, seq = dyadic
    rates = tw.poisson_rates(seq)
    assert rates.rate(1) == pytest.approx(math.log(1.5), rel=1e-14)
    partial = math.fsum(rates.rate(k) for k in range(1, 400))
    assert partial == pytest.approx(-math.log(seq.coeff(0)), rel=1e-12)
    assert rates.total == pytest.approx(1.0 - math.log(0.5), rel=1e-13)
    with pytest.raises(ValueError):
        tw.poisson_rates(seq, pi0=0.0)


def test_poisson_exponential_series_recovers_coefficients(dyadic):
    # truncated exponential series of the jump operator in the level algebra
    _, seq = dyadic
    rates = tw.poisson_rates(seq, pi0=1.0)
    K, terms = 40, 40
    pi = [rates.rate(k) for k in range(K)]
    cum = np.cumsum(pi)
    t = 1.0
    coeff_m = np.zeros(K)
    for n in range(terms):
        if n == 0:
            powers = np.zeros(K)
            powers[0] = 1.0
        else:
            powers = cum**n
            powers[1:] -= cum[:-1] ** n
        coeff_m += t**n / math.factorial(n) * powers
    coeff_m *= math.exp(-t * rates.total)
    assert coeff_m[1] == pytest.approx(seq.coeff(1), rel=1e-12)
    assert coeff_m[0] == pytest.approx(seq.coeff(0), rel=1e-12)
    assert coeff_m[5] == pytest.approx(seq.coeff(5), rel=1e-10)


# -- subordination -------------------------------------------------------------

def test_subordinate_identity(dyadic):
    _, seq = dyadic
    same = tw.subordinate(seq, lambda x: x)
    for k in range(-1, 20):
        assert same.tail(k) == pytest.approx(seq.tail(k), rel=1e-14)


def test_fractional_power_tails(dyadic):
    _, seq = dyadic
    sq = tw.fractional_power(seq, 2.0)
    for k in range(15):
        assert sq.tail(k) == pytest.approx(4.0 ** -(k + 1), rel=1e-13)
    half = tw.fractional_power(seq, 0.5)
    assert half.coeff(0) == pytest.approx(1 - 2**-0.5, rel=1e-13)
    # mass stays 1
    assert math.fsum(half.coeff(k) for k in range(400)) + half.tail(399) == pytest.approx(1.0, abs=1e-12)


def test_fractional_power_composes(dyadic):
    _, seq = dyadic
    ab = tw.fractional_power(tw.fractional_power(seq, 1.5), 2.0)
    direct = tw.fractional_power(seq, 3.0)
    for k in range(20):
        assert ab.tail(k) == pytest.approx(direct.tail(k), rel=1e-12)


def test_subordinate_contract_checks(dyadic):
    _, seq = dyadic
    with pytest.raises(ValueError):
        tw.subordinate(seq, lambda x: x + 0.1)  # phi(0) != 0
    with pytest.raises(ValueError):
        tw.subordinate(seq, lambda x: x * 0.5)  # phi(1) != 1
    with pytest.raises(ValueError):
        tw.subordinate(seq, lambda x: (1 - x) if x < 0.5 else x)  # not increasing


# -- decomposition and folding --------------------------------------------------

def _random_measure(tower, rng, levels, atoms):
    mu = {}
    for _ in range(atoms):
        x = tower.sample_uniform(int(rng.integers(0, levels + 1)), rng)
        mu[x] = mu.get(x, 0.0) + float(rng.random())
    total = math.fsum(mu.values())
    return {x: w / total for x, w in mu.items()}


@pytest.mark.parametrize("kind", ["powers_of_two", "factorial"])
def test_decompose_reconstructs(kind):
    tower = tw.PowersOfTwoTower() if kind == "powers_of_two" else tw.FactorialTower()
    rng = np.random.default_rng(11)
    mu = _random_measure(tower, rng, 4, 25)
    coeffs, comps = tw.decompose_finite(mu, tower)
    assert math.fsum(coeffs) == pytest.approx(1.0, abs=1e-12)
    assert all(c >= -1e-15 for c in coeffs)
    recon = {}
    for c, comp in zip(coeffs, comps):
        assert math.fsum(comp.values()) == pytest.approx(1.0, abs=1e-12)
        for x, w in comp.items():
            recon[x] = recon.get(x, 0.0) + c * w
    for x, w in mu.items():
        assert recon.get(x, 0.0) == pytest.approx(w, rel=1e-10, abs=1e-13)
    # each component lives inside its level
    for k, comp in enumerate(comps):
        assert all(x.min_level <= k for x in comp)


def test_fold_truncation_example(dyadic):
    _, seq = dyadic
    folded = tw.fold_truncation(seq, 3)
    assert [folded.coeff(k) for k in range(4)] == [0.5, 0.25, 0.125, 0.125]
    assert folded.tail(3) == 0.0


def test_folded_return_probability_bound(dyadic):
    tower, seq = dyadic
    K = 3
    trunc = tw.FiniteTruncatedTower(tower, K)
    folded = tw.fold_truncation(seq, K)
    p_fold = tw.point_mass(folded, trunc, 1.0, 0)
    assert p_fold == pytest.approx(43 / 64, abs=1e-14)
    assert abs(p_fold - 2 / 3) <= seq.tail(K) / tower.volume(K) + 1e-15


def test_folded_converges_to_infinite_model(dyadic):
    tower, seq = dyadic
    dist = tw.StepSpectralDistribution(seq, tower)
    for n in (1.0, 4.0):
        p_inf = dist.return_probability(n)
        errs = []
        for K in (4, 6, 8, 10):
            trunc = tw.FiniteTruncatedTower(tower, K)
            folded = tw.fold_truncation(seq, K)
            p_K = tw.point_mass(folded, trunc, n, 0)
            errs.append(abs(p_K - p_inf))
            assert errs[-1] <= 2 * seq.tail(K)
        assert all(b <= a + 1e-15 for a, b in zip(errs, errs[1:]))


def test_weighted_tail_certified(dyadic):
    tower, seq = dyadic
    direct = math.fsum(seq.coeff(i) / tower.volume(i) for i in range(1, 300))
    assert weighted_tail(seq, tower, 0) == pytest.approx(direct, rel=1e-13)


def test_mass_outside_subgroup_formula(dyadic):
    tower, seq = dyadic
    for k in range(6):
        direct = math.fsum(
            seq.coeff(i) * (1 - tower.volume(k) / tower.volume(i))
            for i in range(k + 1, 300)
        )
        assert mass_outside_subgroup(seq, tower, k) == pytest.approx(direct, rel=1e-12)
