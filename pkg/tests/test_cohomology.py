import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qplab.arithmetic import Frequency, cf_expand, make_liouville
from qplab.cohomology import (AnalyticObservable, coboundary, divisors, rotation_matrix, rotations_conjugate,
                              solve_full, solve_truncated)
from qplab.errors import CFIndexError, DomainError, RegimeError

GOLD = Frequency.golden()
LIOU = make_liouville(1.0, 4)


def psi_corpus():
    return [AnalyticObservable.cosine(1.0, 0.5),
            AnalyticObservable.from_modes({1: 0.3, 2: 0.2 - 0.1j, 5: 0.05, 9: 0.01j}, 0.5),
            AnalyticObservable.geometric(0.01, 0.5)]


def test_observable_validation():
    with pytest.raises(DomainError):
        AnalyticObservable(np.array([1.0, 0.0]), 0.5)
    with pytest.raises(DomainError):
        AnalyticObservable(np.array([1j, 0.0, 1j]), 0.5)
    with pytest.raises(DomainError):
        AnalyticObservable.geometric(0.1, 0.5)


def test_cosine_values_and_norm():
    f = AnalyticObservable.cosine(0.7, 0.5)
    x = np.linspace(0, 1, 7)
    assert np.allclose(f(x), 1.4 * np.cos(2 * np.pi * x))
    assert f.strip_norm() == pytest.approx(1.4 * math.exp(math.pi))
    # sup on the boundary lines is 1.4 cosh(pi) <= l1 norm
    assert f.sup_estimate() == pytest.approx(1.4 * math.cosh(math.pi), rel=1e-9)


def test_geometric_tail():
    f = AnalyticObservable.geometric(0.01, 0.5, tail_tol=1e-12)
    q = 0.01 * math.exp(math.pi)
    assert 2 * q ** (f.J + 1) / (1 - q) <= 1e-12
    assert f.mean == 0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-10**6, 10**6), min_size=1, max_size=20))
def test_divisors_match_direct(modes):
    a = GOLD.value
    direct = np.exp(2j * np.pi * np.array(modes) * a) - 1
    assert np.allclose(divisors(modes, GOLD), direct, atol=1e-9)


def test_divisor_at_huge_denominator():
    q = LIOU.cf.q[-1]
    with mpmath.workdps(120):
        ex = LIOU.frequency.exact()
        t = mpmath.mpf(q * ex.numerator % ex.denominator) / ex.denominator
        expect = complex(mpmath.exp(2j * mpmath.pi * t) - 1)
    got = divisors([q], LIOU)[0]
    assert abs(got - expect) <= 1e-15 * max(abs(expect), 1e-300) + 1e-300


def test_shift_and_coboundary():
    f = psi_corpus()[1]
    x = np.linspace(0, 1, 11)
    assert np.allclose(f.shift(GOLD)(x), f(x + GOLD.value))
    assert np.allclose(coboundary(f, GOLD)(x), f(x + GOLD.value) - f(x))


def test_full_solution_round_trip():
    for psi in psi_corpus():
        sol = solve_full(psi, GOLD)
        assert sol.coefficient_error <= 1e-14
        back = coboundary(sol.phi, GOLD)
        assert np.abs(back.fourier - psi.fourier).max() <= 1e-14


def test_full_solution_rejects():
    with pytest.raises(RegimeError):
        solve_full(AnalyticObservable.cosine(1.0, 0.5), LIOU)
    with pytest.raises(DomainError):
        solve_full(AnalyticObservable.from_modes({0: 1.0, 1: 1.0}, 0.5), GOLD)


@pytest.mark.parametrize("freq,ks", [(GOLD, range(0, 6)), (LIOU, range(0, 4))])
def test_truncated_bounds(freq, ks):
    cf = freq.cf if hasattr(freq, "cf") else cf_expand(freq)
    for psi in psi_corpus():
        for k in ks:
            g, rep = solve_truncated(psi, freq, cf, k)
            assert rep.passed, rep
            assert rep.coefficient_error <= 1e-14
            assert g.h == psi.h / 2
            if rep.in_regime:
                assert rep.divisor_floor_ok


def test_truncated_index_guard():
    with pytest.raises(CFIndexError):
        solve_truncated(AnalyticObservable.cosine(), LIOU, LIOU.cf, 4)


def test_rotation_conjugation_identity():
    psi = psi_corpus()[1]
    g, _ = solve_truncated(psi, GOLD, None, 2)
    rc = rotations_conjugate(psi, GOLD, g)
    x = np.linspace(0, 1, 17)
    R = lambda f, y: rotation_matrix(np.real(f(y)))
    lhs = np.linalg.inv(R(g, x + GOLD.value)) @ R(psi, x) @ R(g, x)
    assert np.abs(lhs - rc.matrix(x)).max() <= 1e-12
    assert rc.defect_norm <= psi.strip_norm()
