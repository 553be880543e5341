"""Dual finite-range cocycles: step and block matrices, the symplectic form,
dual Lyapunov spectrum, domination detector, spectral cross-check and the
conserved symplectic pairing."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import mpmath
import numpy as np

from . import _dualmat
from .arithmetic import as_frequency
from .cocycles import (CocycleSpec, DualFiniteRange, TrigPolynomial, default_burn_in,
                       phase_lattice, qr_log_diagonals)
from .errors import DomainError, NumericalQualityError
from .spectrum import DualOperator, hausdorff, truncated_spectrum


def _w_default(w):
    return TrigPolynomial.cosine(1.0) if w is None else w


@dataclass(frozen=True)
class SymplecticForm:
    d: int
    C: np.ndarray
    S: np.ndarray


def symplectic_form(v: TrigPolynomial) -> SymplecticForm:
    if v.degree < 1:
        raise DomainError("symplectic form needs deg v >= 1")
    C = _dualmat.hop_matrix(v)
    return SymplecticForm(v.degree, C, _dualmat.form_matrix(C))


def dual_step(v: TrigPolynomial, w: TrigPolynomial | None, E: complex, theta: float,
              eps: float = 0.0) -> np.ndarray:
    """One-step transfer matrix of the dual finite-range operator at theta."""
    w = _w_default(w)
    if v.degree < 1:
        raise DomainError("dual step needs deg v >= 1")
    w.check_eps(eps)
    return _dualmat.step_batch(v, w, E, np.array([theta + 1j * eps]))[0]


def dual_block_step(v: TrigPolynomial, w: TrigPolynomial | None, E: complex, theta: float,
                    alpha, eps: float = 0.0) -> np.ndarray:
    """Block matrix equal to the product of d consecutive dual steps from theta."""
    w = _w_default(w)
    if v.degree < 1:
        raise DomainError("dual block needs deg v >= 1")
    w.check_eps(eps)
    a = as_frequency(alpha).value
    return _dualmat.block_batch(v, w, E, np.array([theta + 1j * eps]), a)[0]


@dataclass
class DualSpectrumRecord:
    E: float
    gammas: np.ndarray         # ascending, nonnegative half
    gap12: float | None
    simple: bool | None        # None: undecided (gap below the noise floor)
    stderr: np.ndarray
    exponents: np.ndarray = field(repr=False, default=None)   # full 2d list, descending
    pairing_defect: float = 0.0
    reliable: bool = True


def _fold_pairs(lam: np.ndarray, se: np.ndarray):
    m = lam.size
    d = m // 2
    # gamma_i = (lambda_{d+1-i} - lambda_{d+i}) / 2, i = 1..d
    g = np.array([(lam[d - i] - lam[d + i - 1]) / 2 for i in range(1, d + 1)])
    gse = np.array([0.5 * math.hypot(se[d - i], se[d + i - 1]) for i in range(1, d + 1)])
    pair = np.array([lam[i] + lam[m - 1 - i] for i in range(d)])
    pse = np.array([math.hypot(se[i], se[m - 1 - i]) for i in range(d)])
    return g, gse, pair, pse


def dual_lyapunov(v: TrigPolynomial, alpha, E, n: int = 10_000, phases=16,
                  w: TrigPolynomial | None = None, simplicity_floor: float = 0.01,
                  x0: float = 0.0, pairing_floor: float = 1e-6):
    """Dual Lyapunov spectrum gamma_1 <= ... <= gamma_d at energy E (scalar or array).

    All 2d exponents are computed; the list must be symmetric about zero.
    A pair violating symmetry by more than 5 stderr + ``pairing_floor``
    raises NumericalQualityError.
    """
    w = _w_default(w)
    alpha = as_frequency(alpha)
    if v.degree < 1:
        raise DomainError("dual cocycle needs deg v >= 1")
    reliable = n >= 1000
    if not reliable:
        warnings.warn(f"n={n} < 1000: dual exponents are unreliable", stacklevel=2)
    Es = np.atleast_1d(np.asarray(E, dtype=float))
    xs = phase_lattice(phases, x0)
    P = xs.size
    m = 2 * v.degree
    Eb = np.repeat(Es, P)
    xb = np.tile(xs, Es.size)
    b = default_burn_in(n)
    sums, _ = qr_log_diagonals(lambda x: _dualmat.step_batch(v, w, Eb, x), xb, alpha.value,
                               n, m, m, burn_in=b)
    per = (sums / (n - b)).reshape(Es.size, P, m)
    out = []
    for i, e in enumerate(Es):
        lam_p = np.sort(per[i], axis=1)[:, ::-1]
        lam = lam_p.mean(0)
        se = lam_p.std(0, ddof=1) / math.sqrt(P) if P > 1 else np.zeros(m)
        g, gse, pair, pse = _fold_pairs(lam, se)
        bad = np.abs(pair) > 5 * pse + pairing_floor
        if np.any(bad):
            raise NumericalQualityError(
                f"exponent pairing broken at E={e}: sums {pair[bad]} vs stderr {pse[bad]}")
        if v.degree == 1:
            gap, simple = None, True
        else:
            gap = float(g[1] - g[0])
            thr = max(simplicity_floor, 6 * math.hypot(gse[0], gse[1]))
            simple = True if gap > thr else None
        out.append(DualSpectrumRecord(float(e), g, gap, simple, gse, lam,
                                      float(np.max(np.abs(pair))), reliable))
    return out[0] if np.ndim(E) == 0 else out


@dataclass
class DominationVerdict:
    dominated: bool | None
    growth_rate: float
    rates: dict
    log_ratios: dict


def domination_check(spec: CocycleSpec, k: int, n_list: Sequence[int] = (250, 500, 1000, 2000),
                     phases=16, x0: float = 0.0, rate_floor: float = 0.01,
                     bounded_log: float = 5.0) -> DominationVerdict:
    """Detect a dominated splitting at index k from sigma_k / sigma_{k+1}.

    For each n, c_n = min over phases of ln(sigma_k / sigma_{k+1})(A_n) / n,
    with log sigma_j read off the accumulated QR diagonals.  Dominated when
    every c_n exceeds ``rate_floor`` and c does not decay (last >= first / 2);
    not dominated when the log ratio stays below ``bounded_log`` at every n;
    undecided otherwise.
    """
    m = spec.m
    if not (1 <= k <= m - 1):
        raise DomainError(f"k must lie in [1, {m - 1}]")
    ns = sorted(int(x) for x in n_list)
    xs = phase_lattice(phases, x0)
    _, snaps = qr_log_diagonals(spec.steps, xs, spec.phase_step, ns[-1], m, k + 1, checkpoints=ns)
    rates, logs = {}, {}
    for nn in ns:
        S = snaps[nn]
        lr = S[:, k - 1] - S[:, k]
        logs[nn] = float(lr.min())
        rates[nn] = float(lr.min() / nn)
    c = [rates[nn] for nn in ns]
    if min(c) > rate_floor and c[-1] >= 0.5 * c[0]:
        verdict = True
    elif max(abs(logs[nn]) for nn in ns) < bounded_log:
        verdict = False
    else:
        verdict = None
    return DominationVerdict(verdict, c[-1], rates, logs)


@dataclass
class CrosscheckResult:
    distance: float
    reliable: bool
    n_H: int
    n_L: int


def duality_spectrum_crosscheck(v: TrigPolynomial, alpha, N: int = 400, phases=8,
                                w: TrigPolynomial | None = None, trim: bool = True,
                                x0: float = 0.0) -> CrosscheckResult:
    """Hausdorff distance between spectra of H-truncations (potential v) and
    L-truncations (hopping v, potential w)."""
    w = _w_default(w)
    reliable = N >= 100
    if not reliable:
        warnings.warn(f"N={N} < 100: boundary effects dominate the comparison", stacklevel=2)
    H = truncated_spectrum(v, alpha, N, phases, x0, trim)
    L = truncated_spectrum(DualOperator(v, w), alpha, N, phases, x0, trim)
    return CrosscheckResult(hausdorff(H.points, L.points), reliable, H.points.size, L.points.size)


# --- conserved pairing ---------------------------------------------------

class _MpBlocks:
    """Block matrices in the current mpmath precision from exact double inputs."""

    def __init__(self, v, w, E, alpha):
        d = self.d = v.degree
        self.v, self.w, self.alpha = v, w, mpmath.mpf(alpha)
        C = mpmath.matrix(d, d)
        for i in range(d):
            for j in range(i, d):
                C[i, j] = mpmath.mpc(v.hat(d + i - j))
        self.Ci = mpmath.inverse(C)
        self.cc = -self.Ci * C.transpose_conj()
        self.E = mpmath.mpc(E)
        self.wterms = [(k, mpmath.mpc(c)) for k, c in zip(range(-w.degree, w.degree + 1), w.coeffs)
                       if c != 0]

    def __call__(self, theta):
        d, v = self.d, self.v
        Bm = mpmath.matrix(d, d)
        for i in range(d):
            ph = theta + (d - 1 - i) * self.alpha
            val = mpmath.mpc(v.hat(0))
            for k, c in self.wterms:
                val += c * mpmath.expj(2 * mpmath.pi * k * ph)
            for j in range(d):
                if j == i:
                    Bm[i, j] = self.E - val
                elif j > i:
                    Bm[i, j] = -mpmath.mpc(v.hat(-(j - i)))
                else:
                    Bm[i, j] = -mpmath.mpc(v.hat(i - j))
        top = self.Ci * Bm
        M = mpmath.matrix(2 * d, 2 * d)
        for i in range(d):
            for j in range(d):
                M[i, j] = top[i, j]
                M[i, d + j] = self.cc[i, j]
            M[d + i, i] = 1
        return M


@dataclass
class PairingResult:
    pairings: list          # complex values <u_j, S v_j>, j = 0..n
    relative_drift: float   # max_j |p_j - p_0| / |p_0|
    digits: int             # working precision (decimal digits), 16 for double
    log_growth: float       # ln|u_n| + ln|v_n|


def symplectic_pairing(v: TrigPolynomial, w: TrigPolynomial | None, E: float, alpha,
                       u0, v0, x0: float = 0.0, n: int = 50,
                       precision: str = "auto") -> PairingResult:
    """Iterate u, v by the block cocycle and record <u_j, S v_j> = u_j^* S v_j.

    Vectors are renormalized every step and the pairing is rescaled by the
    accumulated norms.  Because the pairing of two exponentially growing,
    nearly parallel vectors is a difference of huge numbers, ``auto`` runs a
    double-precision pre-pass to size the growth and then iterates in
    mpmath with enough digits to resolve the cancellation.  ``double`` stays
    in float64 (useful to see the cancellation floor).
    """
    w = _w_default(w)
    a = as_frequency(alpha).value
    d = v.degree
    form = symplectic_form(v)
    u = np.asarray(u0, dtype=complex).copy()
    x = np.asarray(v0, dtype=complex).copy()
    if u.shape != (2 * d,) or x.shape != (2 * d,):
        raise DomainError(f"vectors must have length {2 * d}")
    step = d * a

    # double pass: growth estimate (and the result in 'double' mode)
    pairs = [complex(u.conj() @ form.S @ x)]
    lu = lx = 0.0
    for j in range(n):
        Mj = _dualmat.block_batch(v, w, E, np.array([math.fmod(x0 + j * step, 1.0)]), a)[0]
        u = Mj @ u
        x = Mj @ x
        nu, nx = np.linalg.norm(u), np.linalg.norm(x)
        u, x = u / nu, x / nx
        lu += math.log(nu)
        lx += math.log(nx)
        scale = lu + lx
        val = complex(u.conj() @ form.S @ x)
        pairs.append(val * math.exp(scale) if scale < 700 else complex(math.inf if val else 0.0))
    growth = lu + lx
    if precision == "double":
        p0 = pairs[0]
        drift = max(abs(p - p0) for p in pairs) / abs(p0) if p0 != 0 else max(abs(p) for p in pairs)
        return PairingResult(pairs, drift, 16, growth)

    digits = int(math.ceil(max(growth, 0.0) / math.log(10.0))) + 30
    with mpmath.workdps(digits):
        S = mpmath.matrix(form.S.tolist())
        um = mpmath.matrix([mpmath.mpc(c) for c in np.asarray(u0, dtype=complex)])
        xm = mpmath.matrix([mpmath.mpc(c) for c in np.asarray(v0, dtype=complex)])

        def pair(p, q):
            return (p.transpose_conj() * S * q)[0, 0]

        out = [pair(um, xm)]
        lsu = lsx = mpmath.mpf(0)
        blocks = _MpBlocks(v, w, E, a)
        for j in range(n):
            th = mpmath.fmod(mpmath.mpf(x0) + j * mpmath.mpf(d) * mpmath.mpf(a), 1)
            Mj = blocks(th)
            um = Mj * um
            xm = Mj * xm
            nu, nx = mpmath.norm(um), mpmath.norm(xm)
            um, xm = um / nu, xm / nx
            lsu += mpmath.log(nu)
            lsx += mpmath.log(nx)
            out.append(pair(um, xm) * mpmath.exp(lsu + lsx))
        p0 = out[0]
        if p0 != 0:
            drift = max(abs(p - p0) for p in out) / abs(p0)
        else:
            drift = max(abs(p) for p in out)
        pairs = [complex(p) for p in out]
        return PairingResult(pairs, float(drift), digits, growth)
