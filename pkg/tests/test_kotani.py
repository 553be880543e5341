import cmath

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qplab.arithmetic import Frequency
from qplab.cocycles import TrigPolynomial
from qplab.errors import ConditioningError, ConvergenceError, DomainError
from qplab.kotani import (default_tail, green_identities_check, green_schrodinger, johnson_moser_residual,
                          m_schrodinger, reflectionless_residual, riccati_batch, riccati_M)
from qplab.spectrum import dense_truncation

GOLD = Frequency.golden()
HARPER = TrigPolynomial.extended_harper(3.0, 0.3)


def free_root(z):
    """Root r of r + 1/r = z with |r| < 1."""
    s = cmath.sqrt(z * z - 4)
    r = (z - s) / 2
    return r if abs(r) < 1 else (z + s) / 2


@pytest.mark.parametrize("z", [1j, 2j, 0.5 + 0.3j, -1.5 + 0.05j, 3 + 1e-3j])
def test_free_m_and_green_closed_form(z):
    mp, mm = m_schrodinger(TrigPolynomial.zero(), GOLD, z)
    r = free_root(z)
    assert abs(mp - r) <= 1e-8 and abs(mm - r) <= 1e-8
    G = green_schrodinger(TrigPolynomial.zero(), GOLD, z)
    assert abs(G - 1 / (2 * r - z)) <= 1e-8


def test_free_values_at_i():
    mp, _ = m_schrodinger(TrigPolynomial.zero(), GOLD, 1j)
    assert mp == pytest.approx(-0.6180339887498949j, abs=1e-12)


def test_certificate_and_failures():
    _, cert = m_schrodinger(TrigPolynomial.cosine(1.0), GOLD, 0.2 + 0.5j, return_certificate=True)
    assert max(cert.delta_plus, cert.delta_minus) <= 1e-10
    assert cert.n_tail == default_tail(0.5)
    with pytest.raises(DomainError):
        m_schrodinger(TrigPolynomial.zero(), GOLD, 0.3)
    with pytest.raises(ConvergenceError) as ei:
        m_schrodinger(TrigPolynomial.zero(), GOLD, 0.3 + 0.01j, n_tail=20)
    assert ei.value.last_delta > 1e-10


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.floats(-4, 4), st.floats(0.05, 2))
def test_m_step_relation(x, E, eta):
    v = TrigPolynomial.cosine(1.3)
    z = complex(E, eta)
    a = GOLD.value
    m0, _ = m_schrodinger(v, GOLD, z, x)
    m1, _ = m_schrodinger(v, GOLD, z, x + a)
    assert abs(m1 - (z - v(x + a) - 1 / m0)) <= 1e-8 * max(1.0, abs(m1))


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.floats(-5, 5), st.floats(0.01, 2))
def test_green_is_herglotz(x, E, eta):
    G = green_schrodinger(TrigPolynomial.cosine(2.0), GOLD, complex(E, eta), x)
    assert G.imag > 0


def test_green_matches_truncated_resolvent():
    v = TrigPolynomial.cosine(1.0)
    z, x, N = 0.3 + 0.5j, 0.21, 801
    c = N // 2
    H = dense_truncation(v, GOLD, N, x - c * GOLD.value)
    R = np.linalg.inv(H - z * np.eye(N))
    assert abs(R[c, c] - green_schrodinger(v, GOLD, z, x)) <= 1e-3


def test_riccati_free_dual():
    # dual data with hopping 1/2 and no potential is the free operator scaled by 1/2
    st_ = riccati_M(TrigPolynomial.cosine(0.5), GOLD, 1j, 0.1, w=TrigPolynomial.zero())
    assert st_.M_plus[0, 0] == pytest.approx(1j * (1 - np.sqrt(2)), abs=1e-10)
    assert st_.green[0, 0] == pytest.approx(1j / np.sqrt(2), abs=1e-10)
    assert st_.m_scalar_plus == pytest.approx(st_.M_plus[0, 0])


def test_riccati_harper_residuals_and_identities():
    a = GOLD.value
    z, om = 0.5 + 0.1j, 0.123
    s0 = riccati_M(HARPER, GOLD, z, om)
    s1 = riccati_M(HARPER, GOLD, z, om - 2 * a)
    assert s0.riccati_residual_plus <= 1e-8 and s0.riccati_residual_minus <= 1e-8
    rep = green_identities_check(s0, s1, HARPER)
    assert not rep.flagged and rep.max_deviation <= 1e-6
    wrong = riccati_M(HARPER, GOLD, z, om + 0.3)
    assert green_identities_check(s0, wrong, HARPER).flagged


def test_green_matrix_herglotz():
    _, _, G, g = riccati_batch(HARPER, GOLD, 0.5 + 0.1j, np.linspace(0, 1, 9, endpoint=False))
    ImG = (G - np.conj(np.swapaxes(G, 1, 2))) / 2j
    assert np.all(np.linalg.eigvalsh(ImG) > 0)
    assert np.all(np.sign(g.imag) == np.sign(g.imag[0]))


def test_ill_conditioned_near_real_axis():
    with pytest.raises(ConditioningError):
        riccati_M(HARPER, GOLD, 0.5 + 1e-12j, 0.1)


def test_johnson_moser_free():
    res = johnson_moser_residual(TrigPolynomial.cosine(0.5), GOLD, 0.3 + 0.5j, n=4000, phases=4,
                                 w=TrigPolynomial.zero())
    assert res.residual <= 1e-3
    assert res.lhs > 0 and res.rhs > 0
    with pytest.raises(DomainError):
        johnson_moser_residual(TrigPolynomial.cosine(0.5), GOLD, 0.3 + 0.01j)


def test_reflectionless_free():
    rep = reflectionless_residual(TrigPolynomial.zero(), GOLD, [0.0], deltas=[1e-2, 1e-3], phases=2)
    assert rep.residuals[:, 0] == pytest.approx([1e-2, 1e-3], rel=1e-6)
    assert rep.trend()[1] < rep.trend()[0]


def test_reflectionless_localized_is_large():
    rep = reflectionless_residual(TrigPolynomial.cosine(2.0), GOLD, [-1.0, 0.5], deltas=[1e-3], phases=2)
    assert rep.residuals.min() >= 0.2
