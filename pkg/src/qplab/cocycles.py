"""Matrix cocycles over x -> x + alpha and their Lyapunov spectra.

Products are never formed densely: the engine pushes an orthonormal frame
through the cocycle, re-orthonormalizes by QR after every step and adds up
log|R_ii|.  All phase samples advance together as one batch, so a whole
(E, eps, phase) grid costs one Python loop over n steps.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from . import _dualmat
from .arithmetic import Frequency, as_frequency
from .errors import DomainError, ShapeError

TWO_PI = 2.0 * math.pi

# cap on batch entries x Fourier modes held at once
_CHUNK_BUDGET = 2_000_000


class TrigPolynomial:
    """Real trigonometric polynomial v(x) = sum_{|k|<=d} c_k e^{2 pi i k x}.

    Parameters
    ----------
    coeffs : mapping k -> complex, or sequence of length 2d+1 ordered k=-d..d
    strip_width : float
        Half-width h of the strip |Im x| < h on which evaluation is allowed.
    """

    def __init__(self, coeffs, strip_width: float = 1.5):
        if isinstance(coeffs, Mapping):
            d = max((abs(int(k)) for k in coeffs), default=0)
            arr = np.zeros(2 * d + 1, dtype=complex)
            for k, c in coeffs.items():
                arr[int(k) + d] = c
        else:
            arr = np.asarray(coeffs, dtype=complex).ravel()
            if arr.size % 2 != 1:
                raise DomainError("coefficient array must have odd length 2d+1")
        # trim vanishing outer pairs so the degree is exact
        while arr.size > 1 and arr[0] == 0 and arr[-1] == 0:
            arr = arr[1:-1]
        d = arr.size // 2
        scale = max(1.0, float(np.abs(arr).max(initial=0.0)))
        ks = np.arange(1, d + 1)
        if np.any(np.abs(arr[d - ks] - np.conj(arr[d + ks])) > 1e-12 * scale) or abs(arr[d].imag) > 1e-12 * scale:
            raise DomainError("coefficients violate c_{-k} = conj(c_k); v would not be real")
        arr[d] = arr[d].real
        if not strip_width > 0:
            raise DomainError("strip_width must be positive")
        self._c = arr
        self.strip_width = float(strip_width)

    # constructors -------------------------------------------------------
    @classmethod
    def cosine(cls, lam: float = 1.0, strip_width: float = 1.5):
        """2 lam cos(2 pi x): the almost Mathieu potential."""
        return cls({-1: lam, 1: lam}, strip_width)

    @classmethod
    def extended_harper(cls, a: float, b: float, strip_width: float = 1.5):
        """2a cos(2 pi x) + 2b cos(4 pi x)."""
        return cls({-2: b, -1: a, 1: a, 2: b}, strip_width)

    @classmethod
    def zero(cls, strip_width: float = 1.5):
        return cls([0.0], strip_width)

    @classmethod
    def constant(cls, c: float, strip_width: float = 1.5):
        return cls([c], strip_width)

    # accessors ----------------------------------------------------------
    @property
    def degree(self) -> int:
        return self._c.size // 2

    @property
    def coeffs(self) -> np.ndarray:
        return self._c.copy()

    def hat(self, k: int) -> complex:
        d = self.degree
        return complex(self._c[k + d]) if abs(k) <= d else 0.0j

    @property
    def is_constant(self) -> bool:
        return self.degree == 0

    def check_eps(self, eps):
        if np.any(np.abs(eps) >= self.strip_width):
            raise DomainError(
                f"|eps| must stay below strip_width={self.strip_width}, got {np.max(np.abs(eps))}")

    def at(self, z):
        """Evaluate at complex phase(s) z = x + i eps (no strip check)."""
        z = np.asarray(z)
        d = self.degree
        if d == 0:
            return np.full(z.shape, self._c[0], dtype=complex)
        ks = np.arange(-d, d + 1)
        return np.exp(TWO_PI * 1j * np.multiply.outer(z, ks)) @ self._c

    def __call__(self, x, eps=0.0):
        self.check_eps(eps)
        val = self.at(np.asarray(x) + 1j * np.asarray(eps))
        if np.all(np.asarray(eps) == 0):
            return val.real
        return val

    def sup_norm(self) -> float:
        return float(np.abs(self._c).sum())

    def __repr__(self):
        d = self.degree
        terms = {k: self._c[k + d] for k in range(0, d + 1) if self._c[k + d] != 0}
        return f"TrigPolynomial(degree={d}, nonneg coeffs={terms}, h={self.strip_width})"


# families ----------------------------------------------------------------

@dataclass(frozen=True)
class Schrodinger:
    v: TrigPolynomial
    E: complex


@dataclass(frozen=True)
class Constant:
    M: np.ndarray


@dataclass(frozen=True)
class DualFiniteRange:
    v: TrigPolynomial
    w: TrigPolynomial
    E: complex


@dataclass(frozen=True)
class DualBlock:
    v: TrigPolynomial
    w: TrigPolynomial
    E: complex


Family = Union[Schrodinger, Constant, DualFiniteRange, DualBlock]


@dataclass(frozen=True)
class CocycleSpec:
    alpha: Frequency
    family: Family
    eps: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "alpha", as_frequency(self.alpha))
        f = self.family
        if isinstance(f, Schrodinger):
            f.v.check_eps(self.eps)
        elif isinstance(f, (DualFiniteRange, DualBlock)):
            if f.v.degree < 1:
                raise DomainError("dual cocycle needs a non-constant v")
            f.w.check_eps(self.eps)
        elif isinstance(f, Constant):
            M = np.asarray(f.M)
            if M.ndim != 2 or M.shape[0] != M.shape[1]:
                raise ShapeError("constant cocycle needs a square matrix")

    @property
    def m(self) -> int:
        f = self.family
        if isinstance(f, Schrodinger):
            return 2
        if isinstance(f, Constant):
            return np.asarray(f.M).shape[0]
        return 2 * f.v.degree

    @property
    def phase_step(self) -> float:
        """Rotation number of the base map (d*alpha for the block cocycle)."""
        if isinstance(self.family, DualBlock):
            return self.family.v.degree * self.alpha.value
        return self.alpha.value

    def steps(self, x) -> np.ndarray:
        """Step matrices at real phases x (array), shape (B, m, m)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        z = x + 1j * self.eps
        f = self.family
        if isinstance(f, Schrodinger):
            out = np.zeros((x.size, 2, 2), dtype=complex)
            out[:, 0, 0] = f.E - f.v.at(z)
            out[:, 0, 1] = -1.0
            out[:, 1, 0] = 1.0
            return out
        if isinstance(f, Constant):
            return np.broadcast_to(np.asarray(f.M, dtype=complex), (x.size,) + np.shape(f.M)).copy()
        if isinstance(f, DualFiniteRange):
            return _dualmat.step_batch(f.v, f.w, f.E, z)
        return _dualmat.block_batch(f.v, f.w, f.E, z, self.alpha.value)

    def step_inverses(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        z = x + 1j * self.eps
        f = self.family
        if isinstance(f, Schrodinger):
            out = np.zeros((x.size, 2, 2), dtype=complex)
            out[:, 0, 1] = 1.0
            out[:, 1, 0] = -1.0
            out[:, 1, 1] = f.E - f.v.at(z)
            return out
        if isinstance(f, Constant):
            inv = np.linalg.inv(np.asarray(f.M, dtype=complex))
            return np.broadcast_to(inv, (x.size,) + inv.shape).copy()
        if isinstance(f, DualFiniteRange):
            return _dualmat.step_inverse_batch(f.v, f.w, f.E, z)
        return _dualmat.block_inverse_batch(f.v, f.w, f.E, z, self.alpha.value)


def schrodinger_step(v: TrigPolynomial, E: complex, x: float, eps: float = 0.0) -> np.ndarray:
    """[[E - v(x + i eps), -1], [1, 0]]."""
    v.check_eps(eps)
    return np.array([[E - v.at(x + 1j * eps), -1.0], [1.0, 0.0]], dtype=complex)


def iterate(spec: CocycleSpec, x0: float, n: int) -> np.ndarray:
    """A_n(x0) = A(x0+(n-1)a) ... A(x0); for n < 0 the inverse iterate
    A(x0-|n|a)^{-1} ... A(x0-a)^{-1}."""
    m = spec.m
    a = spec.phase_step
    P = np.eye(m, dtype=complex)
    if n >= 0:
        for j in range(n):
            P = spec.steps(x0 + j * a)[0] @ P
    else:
        for j in range(1, -n + 1):
            P = spec.step_inverses(x0 - j * a)[0] @ P
    return P


@dataclass
class LyapunovEstimate:
    exponents: np.ndarray
    n_steps: int
    phase_samples: int
    stderr: np.ndarray
    per_phase: np.ndarray = field(repr=False, default=None)
    reliable: bool = True


def phase_lattice(phases, x0: float = 0.0) -> np.ndarray:
    """Integer P -> x0 + j/P; a sequence is taken as explicit phases."""
    if np.isscalar(phases):
        P = int(phases)
        return np.mod(x0 + np.arange(P) / P, 1.0)
    return np.asarray(phases, dtype=float)


def _start_frame(m: int, k: int) -> np.ndarray:
    # fixed generic frame: avoids accidental alignment with coordinate axes
    rng = np.random.default_rng(20240613)
    G = rng.standard_normal((m, k)) + 1j * rng.standard_normal((m, k))
    Q, _ = np.linalg.qr(G)
    return Q


def _kahan_add(acc, comp, x):
    y = x - comp
    t = acc + y
    comp = (t - acc) - y
    return t, comp


def qr_log_diagonals(step_fn, xs: np.ndarray, phase_step: float, n: int, m: int, k: int,
                     checkpoints: Sequence[int] = (), burn_in: int = 0) -> tuple[np.ndarray, dict]:
    """Accumulated log|R_jj|, j < k, along n steps of a batched cocycle.

    step_fn(x) must return (B, m, m) matrices for the phase array x.  The
    first ``burn_in`` steps only align the frame and are not counted.
    Returns the (B, k) sums over steps burn_in..n-1 and a dict of the sums
    at each checkpoint (checkpoints count all steps, burn-in included).
    """
    B = xs.shape[0]
    Q = np.broadcast_to(_start_frame(m, k), (B, m, k)).copy()
    acc = np.zeros((B, k))
    comp = np.zeros((B, k))
    snaps = {}
    cps = set(int(c) for c in checkpoints)
    for t in range(n):
        x = np.mod(xs + t * phase_step, 1.0)
        Y = step_fn(x) @ Q
        Q, R = np.linalg.qr(Y)
        diag = np.diagonal(R, axis1=1, axis2=2)
        mag = np.abs(diag)
        # positive-diagonal convention
        Q = Q * (diag / np.where(mag > 0, mag, 1.0))[:, None, :]
        if t >= burn_in:
            acc, comp = _kahan_add(acc, comp, np.log(mag))
        if t + 1 in cps:
            snaps[t + 1] = acc.copy()
    return acc, snaps


def default_burn_in(n: int) -> int:
    return min(n // 10, 1000)


def lyapunov_spectrum(spec: CocycleSpec, n: int, phases=32, k: int = 1,
                      x0: float = 0.0, burn_in: int | None = None) -> LyapunovEstimate:
    """Top-k finite-volume Lyapunov exponents averaged over phases.

    ``phases`` is a count P (lattice x0 + j/P) or an explicit phase list.
    The first ``burn_in`` steps (default min(n/10, 1000)) rotate the start
    frame onto the Oseledets directions and are excluded from the average;
    this removes the O(1/n) bias coming from the start frame.
    """
    m = spec.m
    if not (1 <= k <= m):
        raise DomainError(f"k must lie in [1, {m}]")
    reliable = n >= 100
    if not reliable:
        warnings.warn(f"n={n} < 100 steps: exponent estimate is unreliable", stacklevel=2)
    xs = phase_lattice(phases, x0)
    b = default_burn_in(n) if burn_in is None else int(burn_in)
    if k == 1 and isinstance(spec.family, Schrodinger):
        f = spec.family
        L = _schrodinger_top(f.v, spec.alpha.value, np.full(xs.size, complex(f.E)),
                             np.full(xs.size, float(spec.eps)), xs, n, b)
        per = L[:, None]
    else:
        sums, _ = qr_log_diagonals(spec.steps, xs, spec.phase_step, n, m, k, burn_in=b)
        per = sums / (n - b)
    P = per.shape[0]
    mean = per.mean(axis=0)
    se = per.std(axis=0, ddof=1) / math.sqrt(P) if P > 1 else np.full(k, np.nan)
    order = np.argsort(mean)[::-1]
    return LyapunovEstimate(mean[order], n, P, se[order], per[:, order], reliable)


def _schrodinger_top(v: TrigPolynomial, alpha: float, E: np.ndarray, eps: np.ndarray,
                     xs: np.ndarray, n: int, burn_in: int = 0) -> np.ndarray:
    """Top exponent by vector iteration for a batch of (E, eps, x) triples."""
    d = v.degree
    ks = np.arange(-d, d + 1)
    base = np.exp(TWO_PI * 1j * np.multiply.outer(xs + 1j * eps, ks)) * v.coeffs
    u0 = np.ones(E.shape, dtype=complex)
    u1 = np.zeros(E.shape, dtype=complex)
    acc = np.zeros(E.shape)
    comp = np.zeros(E.shape)
    for t in range(n):
        ph = np.exp(TWO_PI * 1j * ks * math.fmod(t * alpha, 1.0))
        vt = base @ ph
        nxt = (E - vt) * u0 - u1
        u1 = u0
        u0 = nxt
        nrm = np.sqrt(u0.real ** 2 + u0.imag ** 2 + u1.real ** 2 + u1.imag ** 2)
        u0 = u0 / nrm
        u1 = u1 / nrm
        if t >= burn_in:
            acc, comp = _kahan_add(acc, comp, np.log(nrm))
    return acc / (n - burn_in)


@dataclass
class GridEstimate:
    energies: np.ndarray
    eps: np.ndarray
    L: np.ndarray        # (nE, neps)
    stderr: np.ndarray   # (nE, neps)
    n_steps: int
    phase_samples: int


def lyapunov_grid(v: TrigPolynomial, alpha, energies, eps_values, n: int = 10_000,
                  phases=32, x0: float = 0.0, burn_in: int | None = None) -> GridEstimate:
    """Top Schrodinger exponent L_eps(E) on an (E, eps) grid in one batch."""
    b = default_burn_in(n) if burn_in is None else int(burn_in)
    alpha = as_frequency(alpha)
    Es = np.atleast_1d(np.asarray(energies, dtype=complex))
    eps = np.atleast_1d(np.asarray(eps_values, dtype=float))
    v.check_eps(eps)
    xs = phase_lattice(phases, x0)
    P = xs.size
    nE, ne = Es.size, eps.size
    E_b = np.repeat(Es, ne * P)
    eps_b = np.tile(np.repeat(eps, P), nE)
    x_b = np.tile(xs, nE * ne)
    # keep the working set bounded
    chunk = max(P, (_CHUNK_BUDGET // (2 * v.degree + 1)) // P * P)
    out = np.empty(E_b.size)
    for s in range(0, E_b.size, chunk):
        sl = slice(s, s + chunk)
        out[sl] = _schrodinger_top(v, alpha.value, E_b[sl], eps_b[sl], x_b[sl], n, b)
    per = out.reshape(nE, ne, P)
    L = per.mean(-1)
    se = per.std(-1, ddof=1) / math.sqrt(P) if P > 1 else np.zeros_like(L)
    return GridEstimate(Es, eps, L, se, n, P)


def symplectic_defect(M: np.ndarray, S: np.ndarray) -> float:
    """Operator 2-norm of M^* S M - S."""
    M = np.asarray(M)
    S = np.asarray(S)
    if M.ndim != 2 or S.ndim != 2 or M.shape[0] != M.shape[1] or S.shape != M.shape:
        raise ShapeError(f"shapes {M.shape} and {S.shape} are incompatible")
    return float(np.linalg.norm(M.conj().T @ S @ M - S, 2))
