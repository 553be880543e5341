"""Kotani-theoretic quantities: scalar m-functions, matrix m-functions of the
dual block cocycle, Green's matrices and the identities tying them together.

Conventions
-----------
Scalar (Schrödinger, (Hu)_n = u_{n+1} + u_{n-1} + v(x + n alpha) u_n):
m_plus = u(1)/u(0) for the solution decaying at +infinity, m_minus =
u(-1)/u(0) for the one decaying at -infinity, and the diagonal Green's
function is G(0,0) = 1 / (m_plus + m_minus + v(x) - z).  With this choice
|m| < 1 for the free operator and Im G > 0.

Matrix (dual block cocycle, vectors (X_{k+1}; X_k)): M_plus = X_1 X_0^{-1}
for the stable solution, M_minus = X_{-1} X_0^{-1} for the unstable one,
and G = (C M_plus + C^* M_minus + B - z)^{-1}.  The center value
g = <delta_d, F^{-1} G F delta_d> uses a stable frame F whose last column
is the center-stable direction.  The derivative identity is then
d/d(Im z) of the smallest nonnegative one-step dual exponent equal to
+(1/d) Im of the phase average of g (sign fixed by the free operator).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import _dualmat
from .arithmetic import as_frequency
from .cocycles import TrigPolynomial, default_burn_in, phase_lattice, qr_log_diagonals
from .errors import ConditioningError, ConvergenceError, DomainError


class MPair(NamedTuple):
    m_plus: complex | np.ndarray
    m_minus: complex | np.ndarray


class MCertificate(NamedTuple):
    delta_plus: float
    delta_minus: float
    n_tail: int


def default_tail(imz: float, cap: int = 2_000_000) -> int:
    """Steps needed for the Möbius recursion to contract below ~1e-14.

    The contraction per step is at least exp(-Im z) up to O(1) factors
    inside the spectrum, so ~35 / Im z steps suffice.
    """
    return int(min(cap, math.ceil(35.0 / imz) + 64))


def _check_z(z, floor: float):
    zi = np.imag(np.asarray(z, dtype=complex))
    if np.any(zi < floor):
        raise DomainError(f"need Im z >= {floor:g}, got min Im z = {zi.min():g}")


def m_schrodinger(v: TrigPolynomial, alpha, z, x=0.0, n_tail: int | None = None,
                  tol: float = 1e-10, return_certificate: bool = False):
    """Scalar m-functions at +/- infinity by Möbius recursion.

    ``z`` and ``x`` broadcast against each other.  m_plus runs the
    recursion r_{n-1} = 1/(z - v_n - r_n) backward from n = n_tail; m_minus
    runs s_{n+1} = 1/(z - v_n - s_n) forward from n = -n_tail.  Each is
    started twice (boundary values 0 and infinity); the distance between
    the two results certifies convergence.
    """
    _check_z(z, 1e-6)
    a = as_frequency(alpha).value
    z = np.asarray(z, dtype=complex)
    x = np.asarray(x, dtype=float)
    z, x = np.broadcast_arrays(z, x)
    if n_tail is None:
        n_tail = default_tail(float(np.min(z.imag)))
    n_tail = int(n_tail)
    # boundary value 0 and boundary value infinity (one extra step: 1/(.. - inf) = 0)
    zz = np.stack([z, z])
    xx = np.stack([x, x])
    r = np.zeros(zz.shape, dtype=complex)
    r[1] = 1.0 / (zz[1] - v(xx[1] + (n_tail + 1) * a))
    for n in range(n_tail, 0, -1):
        r = 1.0 / (zz - v(xx + n * a) - r)
    s = np.zeros(zz.shape, dtype=complex)
    s[1] = 1.0 / (zz[1] - v(xx[1] - (n_tail + 1) * a))
    for n in range(-n_tail, 0):
        s = 1.0 / (zz - v(xx + n * a) - s)
    dp = float(np.max(np.abs(r[0] - r[1])))
    dm = float(np.max(np.abs(s[0] - s[1])))
    if max(dp, dm) > tol:
        raise ConvergenceError(f"m recursion not converged after {n_tail} steps "
                               f"(delta {max(dp, dm):.3g})", last_delta=max(dp, dm))
    mp_, mm_ = r[0], s[0]
    if mp_.ndim == 0:
        mp_, mm_ = complex(mp_), complex(mm_)
    pair = MPair(mp_, mm_)
    if return_certificate:
        return pair, MCertificate(dp, dm, n_tail)
    return pair


def green_schrodinger(v: TrigPolynomial, alpha, z, x=0.0, n_tail=None):
    """Diagonal Green's function G(0,0) = 1/(m_plus + m_minus + v(x) - z)."""
    mp_, mm_ = m_schrodinger(v, alpha, z, x, n_tail)
    return 1.0 / (mp_ + mm_ + v(np.asarray(x, dtype=float)) - np.asarray(z))


# --- matrix m-functions ---------------------------------------------------

@dataclass
class MState:
    z: complex
    omega: float
    M_plus: np.ndarray
    M_minus: np.ndarray
    green: np.ndarray
    g: complex
    m_scalar_plus: complex | None
    m_scalar_minus: complex | None
    riccati_residual_plus: float
    riccati_residual_minus: float
    frame_cond: float
    frame_delta: float


def _sweep_frames(v, w, z, omegas, alpha, n_tail):
    """Stable (d columns) and unstable (d + 1 columns) frames at each omega.

    Two generic starts per sweep; their subspace distance is returned as
    a convergence certificate.
    """
    d = v.degree
    m = 2 * d
    step = d * alpha
    om = np.asarray(omegas, dtype=float)
    P = om.size
    rng = np.random.default_rng(7)
    starts = rng.standard_normal((2, m, d + 1)) + 1j * rng.standard_normal((2, m, d + 1))
    om2 = np.concatenate([om, om])

    Q = np.concatenate([np.broadcast_to(np.linalg.qr(starts[i][:, :d])[0], (P, m, d))
                        for i in range(2)])
    for k in range(n_tail - 1, -1, -1):
        Q, _ = np.linalg.qr(_dualmat.block_inverse_batch(v, w, z, np.mod(om2 + k * step, 1.0), alpha) @ Q)
    Fs = Q

    Q = np.concatenate([np.broadcast_to(np.linalg.qr(starts[i])[0], (P, m, d + 1))
                        for i in range(2)])
    for k in range(-n_tail, 0):
        Q, _ = np.linalg.qr(_dualmat.block_batch(v, w, z, np.mod(om2 + k * step, 1.0), alpha) @ Q)
    Fu = Q

    def dist(A, B):
        # sine of the largest principal angle between column spaces
        s = np.linalg.svd(np.conj(np.swapaxes(A, 1, 2)) @ B, compute_uv=False)
        return np.sqrt(np.clip(1 - s.min(axis=1) ** 2, 0, None))

    delta = np.maximum(dist(Fs[:P], Fs[P:]), dist(Fu[:P, :, :d], Fu[P:, :, :d]))
    return Fs[:P], Fu[:P], delta


def _states(v, w, z, omegas, alpha, n_tail, cond_max, frame_tol):
    d = v.degree
    C = _dualmat.hop_matrix(v)
    Cs = C.conj().T
    Fs, Fu, delta = _sweep_frames(v, w, z, omegas, alpha, n_tail)
    Bm = _dualmat.band_matrix(v, w, np.asarray(omegas, dtype=float), alpha)
    blk = _dualmat.block_batch(v, w, z, np.asarray(omegas, dtype=float), alpha)
    top = Fs[:, :d, :]
    cond = np.linalg.cond(top)
    # transversality of stable and unstable frames
    cross = np.linalg.cond(np.concatenate([Fs, Fu[:, :, :d]], axis=2))
    worst = float(max(cond.max(), cross.max()))
    if worst > cond_max or not np.all(np.isfinite(cond)):
        raise ConditioningError(f"frame condition number {worst:.3g} exceeds {cond_max:g}", cond=worst)
    if delta.max() > frame_tol:
        raise ConditioningError(f"stable/unstable frames not converged (subspace distance "
                                f"{delta.max():.3g}); z too close to the spectrum for n_tail={n_tail}",
                                cond=worst)
    Mp = (blk @ Fs)[:, :d, :] @ np.linalg.inv(top)
    Mm = Fu[:, d:, :d] @ np.linalg.inv(Fu[:, :d, :d])
    G = np.linalg.inv(C @ Mp + Cs @ Mm + Bm - z * np.eye(d))

    # center-stable direction: span(Fs) intersected with span(Fu) (d+1 columns)
    K = np.concatenate([Fs, -Fu], axis=2)
    _, _, Vh = np.linalg.svd(K)
    nv = np.conj(Vh[:, -1, :])
    up = Fs @ nv[:, :d, None]
    Fp = np.concatenate([Fs[:, :, : d - 1], up], axis=2)[:, :d, :]
    g = (np.linalg.inv(Fp) @ G @ Fp)[:, d - 1, d - 1]
    return Mp, Mm, G, g, cond, delta


def riccati_M(v: TrigPolynomial, alpha, z: complex, omega: float, w: TrigPolynomial | None = None,
              n_tail: int = 600, cond_max: float = 1e8, frame_tol: float = 1e-6) -> MState:
    """Matrix m-functions, Green's matrix and Riccati residuals at (z, omega).

    ``v`` supplies the dual hopping (its Fourier coefficients), ``w`` the
    dual potential (default 2 cos 2 pi x).  The residuals
        C M+(w) + C^* M+(w - d alpha)^{-1} + B(w) - z
        C M-(w + d alpha)^{-1} + C^* M-(w) + B(w) - z
    use independent sweeps at the shifted phases.
    """
    w = TrigPolynomial.cosine(1.0) if w is None else w
    _check_z(z, 1e-15)
    if v.degree < 1:
        raise DomainError("dual data needs deg v >= 1")
    a = as_frequency(alpha).value
    d = v.degree
    z = complex(z)
    oms = np.array([omega, omega - d * a, omega + d * a])
    Mp, Mm, G, g, cond, delta = _states(v, w, z, oms, a, n_tail, cond_max, frame_tol)
    C = _dualmat.hop_matrix(v)
    Cs = C.conj().T
    B0 = _dualmat.band_matrix(v, w, np.array([omega]), a)[0]
    zI = z * np.eye(d)
    rp = np.abs(C @ Mp[0] + Cs @ np.linalg.inv(Mp[1]) + B0 - zI).max()
    rm = np.abs(C @ np.linalg.inv(Mm[2]) + Cs @ Mm[0] + B0 - zI).max()
    scal_p = complex(Mp[0][0, 0]) if d == 1 else None
    scal_m = complex(Mm[0][0, 0]) if d == 1 else None
    return MState(z, float(omega), Mp[0], Mm[0], G[0], complex(g[0]), scal_p, scal_m,
                  float(rp), float(rm), float(cond[0]), float(delta[0]))


def riccati_batch(v: TrigPolynomial, alpha, z: complex, omegas, w: TrigPolynomial | None = None,
                  n_tail: int = 600, cond_max: float = 1e8, frame_tol: float = 1e-6):
    """M+, M-, G and center values g at many phases (no residual sweeps)."""
    w = TrigPolynomial.cosine(1.0) if w is None else w
    _check_z(z, 1e-15)
    a = as_frequency(alpha).value
    Mp, Mm, G, g, _, _ = _states(v, w, complex(z), np.asarray(omegas, dtype=float), a,
                                 n_tail, cond_max, frame_tol)
    return Mp, Mm, G, g


@dataclass
class IdentityReport:
    deviations: tuple
    max_deviation: float
    flagged: bool


def green_identities_check(state: MState, shifted: MState, v: TrigPolynomial,
                           tol: float = 1e-6) -> IdentityReport:
    """Three identities linking G, M+ and M- at omega and omega - d alpha.

        G(w)        = (-C^* M+(w')^{-1} + C^* M-(w))^{-1}
        G(w')       = (C M+(w') - C M-(w)^{-1})^{-1}
        G(w) C^* M+(w')^{-1} = M+(w') G(w') C - I

    with w' = w - d alpha.  ``shifted`` must be the state at w'; any other
    pairing shows up as a large deviation.
    """
    C = _dualmat.hop_matrix(v)
    Cs = C.conj().T
    d = C.shape[0]
    Mp2i = np.linalg.inv(shifted.M_plus)
    e1 = np.abs(state.green - np.linalg.inv(-Cs @ Mp2i + Cs @ state.M_minus)).max()
    e2 = np.abs(shifted.green - np.linalg.inv(C @ shifted.M_plus - C @ np.linalg.inv(state.M_minus))).max()
    e3 = np.abs(state.green @ Cs @ Mp2i - (shifted.M_plus @ shifted.green @ C - np.eye(d))).max()
    devs = (float(e1), float(e2), float(e3))
    mx = max(devs)
    return IdentityReport(devs, mx, mx > tol)


class JMResult(NamedTuple):
    lhs: float          # d/d(Im z) of the smallest nonnegative one-step dual exponent
    rhs: float          # (1/d) Im <g>
    residual: float     # | |lhs| - |rhs| |
    signed_residual: float


def dual_center_exponent(v: TrigPolynomial, alpha, z, n: int = 10_000, phases=16,
                         w: TrigPolynomial | None = None, x0: float = 0.0) -> np.ndarray:
    """Smallest nonnegative one-step dual exponent at complex energies z."""
    w = TrigPolynomial.cosine(1.0) if w is None else w
    a = as_frequency(alpha).value
    d = v.degree
    zs = np.atleast_1d(np.asarray(z, dtype=complex))
    xs = phase_lattice(phases, x0)
    P = xs.size
    Eb = np.repeat(zs, P)
    xb = np.tile(xs, zs.size)
    b = default_burn_in(n)
    sums, _ = qr_log_diagonals(lambda x: _dualmat.step_batch(v, w, Eb, x), xb, a, n, 2 * d, 2 * d,
                               burn_in=b)
    lam = np.sort(sums / (n - b), axis=1)[:, ::-1]
    return lam[:, d - 1].reshape(zs.size, P).mean(axis=1)


def johnson_moser_residual(v: TrigPolynomial, alpha, z: complex, d_eps: float | None = None,
                           n: int = 10_000, phases=16, w: TrigPolynomial | None = None,
                           n_tail: int = 600, x0: float = 0.0) -> JMResult:
    """Compare the Im z-derivative of the center exponent with (1/d) Im <g>.

    The derivative is a centered difference at z +/- i d_eps on a common
    phase lattice; <g> is the average of the center value over the same
    lattice.
    """
    z = complex(z)
    if z.imag < 0.05:
        raise DomainError("johnson_moser_residual needs Im z >= 0.05")
    if d_eps is None:
        d_eps = min(0.01, z.imag / 10)
    if d_eps > z.imag / 10 + 1e-15:
        raise DomainError("d_eps must be <= Im z / 10")
    d = v.degree
    Lpm = dual_center_exponent(v, alpha, [z + 1j * d_eps, z - 1j * d_eps], n, phases, w, x0)
    lhs = float((Lpm[0] - Lpm[1]) / (2 * d_eps))
    _, _, _, g = riccati_batch(v, alpha, z, phase_lattice(phases, x0), w, n_tail)
    rhs = float(np.mean(g).imag / d)
    return JMResult(lhs, rhs, abs(abs(lhs) - abs(rhs)), lhs - rhs)


@dataclass
class ReflectionlessReport:
    energies: np.ndarray
    deltas: np.ndarray
    residuals: np.ndarray      # (len(deltas), len(energies)), phase-averaged
    per_phase: np.ndarray      # (len(deltas), len(energies), phases)

    def trend(self) -> np.ndarray:
        """Grid-averaged residual for each delta."""
        return self.residuals.mean(axis=1)


def reflectionless_residual(v: TrigPolynomial, alpha, energies, deltas: Sequence[float] = (1e-2, 1e-3),
                            phases=4, x0: float = 0.0, n_tail: int | None = None) -> ReflectionlessReport:
    """|m_plus(E + i delta) - 1/conj(m_minus(E + i delta))| over a grid.

    Both m-functions are read in the projective frame of the site pair
    (0, -1): the +infinity solution enters as u(0)/u(-1), one more
    backward Möbius step 1/(z - v(x) - m_plus) from the u(1)/u(0) ratio,
    and the -infinity solution as u(-1)/u(0).  In that frame the boundary
    relation says the two Weyl solutions are complex conjugates.
    Returns the per-energy residual (averaged over phases) for each delta,
    so the trend as delta decreases can be inspected.
    """
    Es = np.atleast_1d(np.asarray(energies, dtype=float))
    ds = np.atleast_1d(np.asarray(deltas, dtype=float))
    xs = phase_lattice(phases, x0)
    out = np.empty((ds.size, Es.size, xs.size))
    for i, dl in enumerate(ds):
        z = (Es + 1j * dl)[:, None]
        mp_, mm_ = m_schrodinger(v, alpha, z, xs[None, :], n_tail)
        stable = 1.0 / (z - v(xs[None, :]) - mp_)
        out[i] = np.abs(stable - 1.0 / np.conj(mm_))
    return ReflectionlessReport(Es, ds, out.mean(axis=2), out)
