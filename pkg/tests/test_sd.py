import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lpsubdiff.errors import NoCrossingError, NotApplicableError, ParameterError
from lpsubdiff.grid import Exponents, MeasureSpace
from lpsubdiff.profiles import DyadicProfile, PowerProfile, TableProfile
from lpsubdiff.sd import (
    SdVerdict,
    VACUOUS,
    adversarial_quotient,
    adversarial_verdict,
    check_bounded_away,
    check_hoelder_criterion,
    check_level_decay,
    classify_profile,
    grid_verdict,
    integrability_test,
    ivt_gamma,
)
from strategies import functions


def test_bounded_away_examples():
    sp = MeasureSpace.uniform(3)
    assert check_bounded_away(sp.function([0.0, 2.0, 3.0])) == 2.0
    assert check_bounded_away(sp.constant(0.0)) is VACUOUS
    assert check_bounded_away(MeasureSpace.uniform(2).function([1e-9, 5.0])) == 1e-9


@given(functions())
def test_grid_functions_are_always_sd(u):
    v = grid_verdict(u)
    assert v.is_sd and v.method == "bounded_away"
    assert check_bounded_away(u) > 0


def test_hoelder_examples():
    e = Exponents(2.0, 0.0)
    ok, val, _ = check_hoelder_criterion(PowerProfile(0.25), e, 1e-8)
    assert ok and abs(val - 2.0) <= 1e-3
    ok, val, _ = check_hoelder_criterion(PowerProfile(0.75), e, 1e-8)
    assert not ok and val > 1e5
    with pytest.raises(NotApplicableError):
        check_hoelder_criterion(PowerProfile(0.25), Exponents(1.0, 0.0))


def test_hoelder_dyadic_partial_sums_are_harmonic():
    prof = DyadicProfile.critical(2.0)
    e = Exponents(2.0, 0.0)
    for k in (10, 100, 1000):
        lo = math.sqrt(prof.gamma(k) * prof.gamma(k + 1))
        res = check_hoelder_criterion(prof, e, lo)
        ref = sum(1 / (2 * j) for j in range(1, k + 1))
        assert res.value == pytest.approx(ref, rel=1e-12)
        assert not res.converges


def test_integrability_test_with_other_exponents():
    # x^0.4: integral of x^(-0.4 e) converges iff 0.4 e < 1
    assert integrability_test(PowerProfile(0.4), 2.0, 1e-30).converges
    assert not integrability_test(PowerProfile(0.4), 3.0, 1e-30).converges
    assert integrability_test(TableProfile([0.5], [0.2]), 50.0).converges


@pytest.mark.parametrize("s", [1.5, 2.0, 4.0])
@pytest.mark.parametrize("alpha", [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
def test_level_decay_matches_power_classification(alpha, s):
    if abs(alpha + 1 / s - 1) < 1e-12:
        pytest.skip("boundary case")
    v = check_level_decay(PowerProfile(alpha), Exponents(s, 0.0))
    assert v.is_sd == (alpha + 1 / s < 1)
    r = s / (s - 1)
    assert v.slope_estimate == pytest.approx(1 / alpha - r, rel=1e-9, abs=1e-9)


def test_level_decay_boundary_constant_phi_is_not_sd():
    v = check_level_decay(PowerProfile(0.5), Exponents(2.0, 0.0))
    assert not v.is_sd
    assert all(phi == pytest.approx(1.0) for _, phi in v.trace)


def test_level_decay_dyadic_is_sd():
    v = check_level_decay(DyadicProfile.critical(2.0), Exponents(2.0, 0.0))
    assert v.is_sd and v.method == "level_decay"
    gammas = [g for g, _ in v.trace]
    assert all(a > b for a, b in zip(gammas, gammas[1:]))


def test_level_decay_rejects_short_grid_and_s_one():
    with pytest.raises(ParameterError):
        check_level_decay(PowerProfile(0.3), Exponents(2.0, 0.0), np.geomspace(1e-1, 1e-4, 20))
    with pytest.raises(NotApplicableError):
        check_level_decay(PowerProfile(0.3), Exponents(1.0, 0.0))


def test_adversarial_quotient_examples():
    e = Exponents(2.0, 0.0)
    (_, q), = adversarial_quotient(PowerProfile(0.25), e, [0.01])
    assert q == pytest.approx(math.sqrt(1.5) * 0.01**0.25, rel=1e-12)
    assert q == pytest.approx(0.38730, abs=5e-6)
    for _, q in adversarial_quotient(PowerProfile(0.5), e, [0.5, 1e-3, 1e-9]):
        assert q == pytest.approx(math.sqrt(2), rel=1e-12)
    for prof in [PowerProfile(0.3), DyadicProfile.critical(2.0), TableProfile([0.1, 1.0], [0.2, 0.5])]:
        (_, q), = adversarial_quotient(prof, e, [prof.support_measure()])
        assert 0 < q < math.inf


@given(st.floats(0.05, 0.95), st.sampled_from([1.0, 1.5, 2.0, 3.0, 4.0]), st.floats(1e-12, 1.0))
def test_adversarial_quotient_power_closed_form(alpha, s, t):
    (_, q), = adversarial_quotient(PowerProfile(alpha), Exponents(s, 0.0), [t])
    assert q == pytest.approx((alpha * s + 1) ** (1 / s) * t ** (1 - alpha - 1 / s), rel=1e-10)


@pytest.mark.parametrize("s", [1.5, 2.0, 4.0])
@pytest.mark.parametrize("alpha", [0.1, 0.25, 0.4, 0.6, 0.75, 0.9])
def test_criterion_equivalence(alpha, s):
    if abs(alpha + 1 / s - 1) < 1e-12:
        pytest.skip("boundary case")
    e = Exponents(s, 0.0)
    prof = PowerProfile(alpha)
    assert check_level_decay(prof, e).is_sd == adversarial_verdict(prof, e).is_sd


@pytest.mark.parametrize("s", [1.5, 2.0, 4.0])
@pytest.mark.parametrize("k_power", [0.0, 1.0, 2.0])
def test_criterion_equivalence_dyadic(s, k_power):
    e = Exponents(s, 0.0)
    prof = DyadicProfile(1 - 1 / s, k_power)
    a = check_level_decay(prof, e).is_sd
    b = adversarial_verdict(prof, e).is_sd
    assert a == b == (k_power > 0)


def test_s_one_classification_uses_adversarial_quotient():
    e = Exponents(1.0, 0.0)
    assert classify_profile(PowerProfile(0.5), e).method == "adversarial"
    # quotient is (alpha+1) t^(-alpha) and blows up for s = 1
    assert not classify_profile(PowerProfile(0.5), e).is_sd
    assert classify_profile(TableProfile([0.5], [1.0]), e).is_sd


def test_verdict_method_is_validated():
    with pytest.raises(ParameterError):
        SdVerdict(True, "guess")


def test_ivt_examples():
    assert ivt_gamma(lambda g: g, 1.0, 1.0) == pytest.approx(1.0, abs=1e-12)
    assert ivt_gamma(lambda g: g * g, 2.0, 16.0) == pytest.approx(2.0, abs=1e-12)
    step = lambda g: 1.0 if g >= 0.5 else 0.0
    gc = ivt_gamma(step, 1.0, 0.25)
    assert gc == pytest.approx(0.5, abs=1e-12)
    # sandwich g(gc-) <= C / gc^alpha <= g(gc+)
    eps = 1e-9
    assert step(gc - eps) <= 0.25 / gc <= step(gc + eps)
    with pytest.raises(NoCrossingError):
        ivt_gamma(lambda g: 0.0, 1.0, 1.0)
    with pytest.raises(ParameterError):
        ivt_gamma(lambda g: g, 1.0, -1.0)


@given(st.sampled_from([0.5, 1.0, 2.0, 3.0]), st.sampled_from([0.5, 1.0, 2.0]), st.floats(1e-8, 1e3))
def test_ivt_power_closed_form(beta, alpha, c):
    gc = ivt_gamma(lambda g: g**beta, alpha, c)
    assert gc == pytest.approx(c ** (1 / (alpha + beta)), rel=1e-10, abs=1e-12)


@given(st.floats(0.3, 3.0), st.floats(0.5, 3.0))
def test_ivt_monotone_in_c(beta, alpha):
    cs = 10.0 ** -np.arange(1, 9)
    gs = [ivt_gamma(lambda g: g**beta, alpha, c) for c in cs]
    assert all(a >= b for a, b in zip(gs, gs[1:]))
    assert gs[-1] < gs[0]


def test_ivt_on_profile_level_measure():
    prof = DyadicProfile.critical(2.0)
    gc = ivt_gamma(prof.level_measure, 1.0, 1e-3)
    below = prof.level_measure(gc * (1 - 1e-9))
    above = prof.level_measure(gc)
    assert below * (gc * (1 - 1e-9)) <= 1e-3 <= above * gc


# implication chain: bounded away => Hoelder => level decay ---------------------------------

CHAIN_PROFILES = [
    TableProfile([1e-3, 0.1, 0.5], [0.1, 0.3, 0.9]),
    TableProfile([0.25], [1.0]),
    PowerProfile(0.1),
    PowerProfile(0.2),
    PowerProfile(0.3),
    PowerProfile(0.6),
    PowerProfile(0.9),
    DyadicProfile.critical(1.5),
    DyadicProfile.critical(2.0),
    DyadicProfile.critical(4.0),
    DyadicProfile(0.5, 0.0),
]


@pytest.mark.parametrize("prof", CHAIN_PROFILES, ids=repr)
@pytest.mark.parametrize("s", [1.5, 2.0, 4.0])
def test_implication_chain(prof, s):
    e = Exponents(s, 0.0)
    bounded = prof.essential_infimum() > 0
    hoelder = check_hoelder_criterion(prof, e, 1e-30).converges
    level = check_level_decay(prof, e).is_sd
    if bounded:
        assert hoelder
    if hoelder:
        assert level


@pytest.mark.parametrize("s", [1.5, 2.0, 4.0])
def test_strictness_witnesses(s):
    e = Exponents(s, 0.0)
    alpha = 0.5 * (1 - 1 / s)
    power = PowerProfile(alpha)
    assert power.essential_infimum() == 0
    assert check_level_decay(power, e).is_sd
    dyadic = DyadicProfile.critical(s)
    assert check_level_decay(dyadic, e).is_sd
    assert not check_hoelder_criterion(dyadic, e).converges


@pytest.mark.parametrize("alpha_e", [0.5, 0.9, 0.95, 1.0, 1.05, 1.1, 2.0])
def test_integrability_near_the_boundary(alpha_e):
    # integral of x^(-alpha e) over (0, 1) converges iff alpha e < 1
    for alpha in (0.3, 0.9):
        res = integrability_test(PowerProfile(alpha), alpha_e / alpha)
        assert res.converges == (alpha_e < 1)
