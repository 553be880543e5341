import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from qplab.arithmetic import (CFExpansion, Frequency, beta_estimate, cf_expand, convergents_from_quotients,
                              make_liouville, norm_k_alpha, qn_quality_check)
from qplab.errors import CFIndexError, DomainError, InsufficientDataError, SizeError


def fib(n):
    a, b = 1, 1
    out = []
    for _ in range(n):
        out.append(a)
        a, b = b, a + b
    return out


def test_golden_expansion_is_all_ones(golden):
    cf = cf_expand(golden, 10)
    assert cf.quotients == (1,) * 10
    assert cf.q[:10] == fib(10)


def test_golden_double_sample_matches_symbolic():
    cf = cf_expand(Frequency.from_value((math.sqrt(5) - 1) / 2), 10)
    assert cf.quotients == (1,) * 10
    assert cf.q[:10] == fib(10)


def test_rational_expansion_terminates():
    cf = cf_expand(Frequency.rational(2, 7), 10)
    assert cf.quotients == (3, 2)
    assert cf.convergents[-1] == (2, 7)


def test_out_of_range_frequency():
    with pytest.raises(DomainError):
        cf_expand(Frequency.from_value(1.5), 10)
    with pytest.raises(DomainError):
        Frequency.from_value(0.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 10**6), min_size=1, max_size=40))
def test_determinant_identity_exact(quotients):
    conv = convergents_from_quotients(quotients)
    for k in range(1, len(conv)):
        (p1, q1), (p0, q0) = conv[k], conv[k - 1]
        assert p1 * q0 - p0 * q1 == (-1) ** (k - 1)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 50), min_size=2, max_size=30))
def test_denominators_strictly_increase(quotients):
    q = [c[1] for c in convergents_from_quotients(quotients)]
    assert all(b > a for a, b in zip(q[1:], q[2:]))


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-6, 1 - 1e-6))
def test_reconstruction_within_tolerance(x):
    cf = cf_expand(Frequency.from_value(x), 20)
    # trusted prefix plus remainder reproduces the sample
    assert abs(cf.reconstruct() - x) <= 2.0 ** -45
    for k in range(1, len(cf.convergents)):
        (p1, q1), (p0, q0) = cf.convergents[k], cf.convergents[k - 1]
        assert p1 * q0 - p0 * q1 == (-1) ** (k - 1)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-4, 1 - 1e-4))
def test_two_sided_qn_bound(x):
    a = Frequency.from_value(x)
    cf = cf_expand(a, 30)
    ex = a.exact()
    for n in range(1, cf.trustworthy):
        qn, qn1 = cf.convergents[n][1], cf.convergents[n + 1][1]
        r = (qn * ex) % 1
        nrm = min(r, 1 - r)
        assert Fraction(1, 2 * qn1) <= nrm <= Fraction(1, qn1)


def test_beta_golden_decreases(golden):
    est = beta_estimate(cf_expand(golden, 10))
    r = est.ratios
    assert r[1] == pytest.approx(math.log(2))
    assert all(b < a for a, b in zip(r[1:], r[2:]))
    assert beta_estimate(cf_expand(golden, 60)).value < 1e-4


def test_beta_two_quotients():
    cf = cf_expand(Frequency.from_quotients((1, 20)))
    # q = 1, 1, 21: ln q_2 / q_1 = ln 21
    assert cf.q == [1, 1, 21]
    assert beta_estimate(cf).value == pytest.approx(math.log(21))


def test_beta_needs_three_convergents():
    with pytest.raises(InsufficientDataError):
        beta_estimate(cf_expand(Frequency.from_quotients((3,))))


def test_quality_golden(golden):
    rep = qn_quality_check(golden, cf_expand(golden), 5)
    assert rep.passed and rep.two_sided_ok
    assert rep.lower <= rep.norm_qn <= rep.upper
    assert rep.q_n == 8 and rep.q_next == 13


def test_quality_large_quotient_branch():
    a = Frequency.from_quotients((1, 2, 1, 3, 2, 200, 1, 1, 1, 1))
    cf = cf_expand(a)
    rep = qn_quality_check(a, cf, 5)
    assert rep.q_next > 100 * rep.q_n
    assert rep.floor_applies and rep.floor_ok and rep.passed
    assert rep.complete
    # independent scan with exact fractions
    ex = a.exact()
    worst = min(norm_k_alpha(k, ex) for k in range(1, (rep.q_next - 1) // 6 + 1) if k % rep.q_n)
    assert worst == pytest.approx(rep.min_norm_scanned, rel=1e-15)
    assert worst >= 1 / (4 * rep.q_n)


def test_quality_index_error():
    a = Frequency.rational(2, 7)
    with pytest.raises(CFIndexError):
        qn_quality_check(a, cf_expand(a), 5)


def test_liouville_beta_one():
    lv = make_liouville(1.0, 4)
    q = lv.cf.q
    assert q == [1, 1, 4, 57, 5685719999335932222640363]
    a = lv.cf.quotients
    for n in range(1, len(q) - 1):
        # a_{n+1} q_n lies in [e^{q_n}, e^{q_n} + q_n] (float e^{q_n} at double precision)
        if q[n] < 700:
            lo = math.exp(q[n])
            val = a[n] * q[n]
            assert lo * (1 - 1e-15) <= val <= lo * (1 + 1e-15) + q[n]
    for n in range(2, len(q) - 1):
        assert abs(math.log(q[n + 1]) / q[n] - 1.0) <= 0.2


def test_liouville_small_beta_envelope():
    """Realized ratios sit in [beta, beta + ln(1 + (q_n + q_{n-1}) e^{-beta q_n}) / q_n]."""
    beta = 0.1
    lv = make_liouville(beta, 6)
    q = lv.cf.q
    for n in range(1, len(q) - 1):
        r = math.log(q[n + 1]) / q[n]
        assert r >= beta - 1e-12
        assert r <= beta + math.log1p((q[n] + q[n - 1]) * math.exp(-beta * q[n])) / q[n] + 1e-12


def test_liouville_overflow():
    with pytest.raises(SizeError) as ei:
        make_liouville(6.0, 12)
    assert ei.value.largest_safe is not None and ei.value.largest_safe < 12
    make_liouville(6.0, ei.value.largest_safe)


def test_liouville_beta_estimate(golden):
    lv = make_liouville(1.0, 4)
    assert beta_estimate(lv.cf).value == pytest.approx(1.0, abs=0.02)
