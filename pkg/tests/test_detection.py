from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from relayshare.detection import (
    DetectionParams,
    binomial_dropout_test,
    binomial_two_sided_pvalue,
    qber_test,
    qber_tests,
    run_checks,
)
from relayshare.qkdlink import LinkStats

from oracles import binomial_cdf, binomial_pvalue


@pytest.mark.parametrize("p", [Fraction(1, 2), Fraction(1, 3), Fraction(3, 4), Fraction(1, 10)])
def test_pvalue_matches_exhaustive_sum(p):
    for n in range(1, 31):
        for k in range(n + 1):
            want = float(binomial_pvalue(k, n, p))
            assert binomial_two_sided_pvalue(k, n, float(p)) == pytest.approx(want, rel=1e-9, abs=1e-15)


def test_always_on_relay_thousand_slots():
    r = binomial_dropout_test(1000, 1000, 0.5, 1e-3, relay_id=1)
    assert r.p_value < 1e-300
    assert r.flagged
    # both tails at 2**-1000
    assert r.p_value == pytest.approx(2 * 2.0**-1000, rel=1e-6)


def test_exactly_expected_count_not_flagged():
    r = binomial_dropout_test(500, 1000, 0.5)
    assert r.p_value == 1.0
    assert not r.flagged


def test_never_on_twenty_slots():
    r = binomial_dropout_test(0, 20, 0.5, 1e-3)
    assert r.p_value == pytest.approx(2 * 2.0**-20, rel=1e-12)
    assert r.flagged


@given(st.integers(1, 3000), st.data(), st.floats(0.01, 0.99))
def test_pvalue_in_unit_interval(n, data, p):
    k = data.draw(st.integers(0, n))
    pv = binomial_two_sided_pvalue(k, n, p)
    assert 0.0 <= pv <= 1.0


@given(st.integers(1, 400), st.data())
def test_flag_iff_below_alpha(n, data):
    k = data.draw(st.integers(0, n))
    r = binomial_dropout_test(k, n, 0.5, 1e-3)
    assert r.flagged == (r.p_value < 1e-3)


def test_pvalue_input_validation():
    with pytest.raises(ValueError):
        binomial_two_sided_pvalue(5, 4, 0.5)
    with pytest.raises(ValueError):
        binomial_two_sided_pvalue(1, 4, 1.0)
    with pytest.raises(ValueError):
        binomial_dropout_test(0, 0, 0.5)
    with pytest.raises(ValueError):
        binomial_dropout_test(1, 4, 0.5, alpha=0.0)


def test_qber_zero_not_flagged():
    assert not qber_test(3, LinkStats(2000, 500, 0)).flagged


def test_qber_quarter_flagged():
    r = qber_test(6, LinkStats(3200, 400, 100), threshold=0.11)
    assert r.qber == 0.25
    assert r.flagged


def test_quarter_error_rate_almost_never_looks_clean_at_400():
    # P(Bin(400, 1/4) <= 44), i.e. measured qber <= 0.11
    assert binomial_cdf(44, 400, Fraction(1, 4)) < Fraction(1, 10**9)


def test_small_sample_never_flagged():
    assert not qber_test(1, LinkStats(200, 50, 4)).flagged
    assert not qber_test(1, LinkStats(200, 50, 25)).flagged


def test_qber_flag_rule():
    assert qber_test(1, LinkStats(1000, 100, 12)).flagged
    assert not qber_test(1, LinkStats(1000, 100, 11)).flagged
    assert not qber_test(1, LinkStats(0, 0, 0)).flagged


def test_qber_threshold_validation():
    with pytest.raises(ValueError):
        qber_test(1, LinkStats(), threshold=0.5)


def test_qber_tests_sorted_by_channel():
    out = qber_tests({6: LinkStats(1, 1, 0), 1: LinkStats(1, 1, 0)})
    assert [r.channel for r in out] == [1, 6]


def test_run_checks_orders_qber_before_dropout():
    cp = run_checks(
        1000,
        on_counts=[1000, 500, 500],
        total_slots=1000,
        probs=[0.5, 0.5, 0.5],
        stats={2: LinkStats(500, 200, 50)},
        params=DetectionParams(),
    )
    assert [type(f).__name__ for f in cp.flags] == ["QberTestResult", "DropoutTestResult"]
    assert cp.flags[0].describe() == "qber_test: channel {2} qber 0.25 > 0.11"
    assert cp.flags[1].relay_id == 1
