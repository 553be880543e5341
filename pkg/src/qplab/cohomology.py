"""Small-divisor solver for psi(x) = phi(x + alpha) - phi(x).

Observables are real trigonometric polynomials stored by their Fourier
coefficients on -J..J.  Strip norms are weighted l1 norms
sum |f_j| exp(2 pi |j| h), an upper bound for the sup norm on the strip
|Im x| < h; a grid estimate of the sup norm is available as well.

Phase factors exp(2 pi i j alpha) are computed from the exact reduction of
j * alpha mod 1 (alpha taken as its exact rational stand-in), so the
small divisors keep full relative accuracy even for huge j.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, NamedTuple

import numpy as np

from .arithmetic import CFExpansion, Frequency, as_frequency, beta_estimate, cf_expand
from .errors import CFIndexError, DomainError, RegimeError


@dataclass(frozen=True)
class AnalyticObservable:
    """Real observable with coefficients ``fourier[j + J]``, j = -J..J."""

    fourier: np.ndarray
    h: float

    def __post_init__(self):
        c = np.asarray(self.fourier, dtype=complex)
        if c.ndim != 1 or c.size % 2 != 1:
            raise DomainError("fourier must be a 1-D array of odd length (modes -J..J)")
        scale = max(1.0, float(np.max(np.abs(c))) if c.size else 1.0)
        if np.max(np.abs(c - np.conj(c[::-1]))) > 1e-13 * scale:
            raise DomainError("coefficients violate f(-j) = conj f(j); observable is not real")
        if self.h <= 0:
            raise DomainError("strip width h must be positive")
        object.__setattr__(self, "fourier", c)

    @classmethod
    def from_modes(cls, modes: Mapping[int, complex], h: float) -> "AnalyticObservable":
        """Build from {j: f_j}; missing negative modes are filled by conjugation."""
        full = {}
        for j, c in modes.items():
            full[int(j)] = complex(c)
        for j, c in list(full.items()):
            full.setdefault(-j, complex(np.conj(c)))
        J = max((abs(j) for j in full), default=0)
        arr = np.zeros(2 * J + 1, dtype=complex)
        for j, c in full.items():
            arr[j + J] = c
        return cls(arr, h)

    @classmethod
    def cosine(cls, amplitude: float = 1.0, h: float = 0.5) -> "AnalyticObservable":
        """2 * amplitude * cos(2 pi x)."""
        return cls.from_modes({1: amplitude, -1: amplitude}, h)

    @classmethod
    def geometric(cls, rate: float, h: float, tail_tol: float = 1e-12) -> "AnalyticObservable":
        """f_j = rate^|j| for j != 0, truncated once the weighted tail at h
        drops below ``tail_tol``.  Needs rate * exp(2 pi h) < 1."""
        q = rate * math.exp(2 * math.pi * h)
        if not (0 < rate and q < 1):
            raise DomainError("geometric observable needs 0 < rate < exp(-2 pi h)")
        # tail sum_{|j|>J} q^|j| = 2 q^{J+1}/(1-q)
        J = max(1, math.ceil(math.log(tail_tol * (1 - q) / 2) / math.log(q)))
        j = np.arange(-J, J + 1)
        arr = rate ** np.abs(j).astype(float)
        arr[J] = 0.0
        return cls(arr.astype(complex), h)

    @property
    def J(self) -> int:
        return (self.fourier.size - 1) // 2

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.J, self.J + 1)

    @property
    def mean(self) -> complex:
        return complex(self.fourier[self.J])

    def hat(self, j: int) -> complex:
        return complex(self.fourier[j + self.J]) if abs(j) <= self.J else 0j

    def strip_norm(self, h: float | None = None) -> float:
        h = self.h if h is None else h
        return float(np.sum(np.abs(self.fourier) * np.exp(2 * math.pi * np.abs(self.modes) * h)))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x)
        ph = np.exp(2j * math.pi * np.multiply.outer(x, self.modes))
        return ph @ self.fourier

    def sup_estimate(self, h: float | None = None, grid: int = 2048) -> float:
        """max |f| over a grid on the two boundary lines Im x = +/- h."""
        h = self.h if h is None else h
        x = np.arange(grid) / grid
        return float(max(np.abs(self(x + 1j * h)).max(), np.abs(self(x - 1j * h)).max()))

    def shift(self, alpha) -> "AnalyticObservable":
        """x -> f(x + alpha)."""
        return AnalyticObservable(self.fourier * phase_factors(self.modes, alpha), self.h)

    def with_strip(self, h: float) -> "AnalyticObservable":
        return AnalyticObservable(self.fourier, h)

    def _aligned(self, other):
        J = max(self.J, other.J)
        a = np.zeros(2 * J + 1, dtype=complex)
        b = np.zeros(2 * J + 1, dtype=complex)
        a[J - self.J: J + self.J + 1] = self.fourier
        b[J - other.J: J + other.J + 1] = other.fourier
        return a, b

    def __add__(self, other: "AnalyticObservable") -> "AnalyticObservable":
        a, b = self._aligned(other)
        return AnalyticObservable(a + b, min(self.h, other.h))

    def __sub__(self, other: "AnalyticObservable") -> "AnalyticObservable":
        a, b = self._aligned(other)
        return AnalyticObservable(a - b, min(self.h, other.h))


def _exact_alpha(alpha) -> Fraction:
    if isinstance(alpha, Fraction):
        return alpha
    return as_frequency(alpha).exact()


def centered_phases(modes, alpha) -> np.ndarray:
    """j * alpha reduced exactly to [-1/2, 1/2), as floats."""
    a = _exact_alpha(alpha)
    P, Q = a.numerator, a.denominator
    out = np.empty(len(modes))
    for i, j in enumerate(modes):
        r = (int(j) * P) % Q
        if 2 * r >= Q:
            r -= Q
        out[i] = r / Q
    return out


def phase_factors(modes, alpha) -> np.ndarray:
    return np.exp(2j * math.pi * centered_phases(modes, alpha))


def divisors(modes, alpha) -> np.ndarray:
    """exp(2 pi i j alpha) - 1 without cancellation: 2 i sin(pi t) exp(i pi t)."""
    t = centered_phases(modes, alpha)
    return 2j * np.sin(math.pi * t) * np.exp(1j * math.pi * t)


def coboundary(phi: AnalyticObservable, alpha) -> AnalyticObservable:
    """phi(x + alpha) - phi(x), built from coefficients."""
    return AnalyticObservable(phi.fourier * divisors(phi.modes, alpha), phi.h)


class FullSolution(NamedTuple):
    phi: AnalyticObservable
    strip_norm: float
    beta_hat: float
    coefficient_error: float


def _require_mean_zero(psi: AnalyticObservable):
    if abs(psi.mean) > 1e-14 * max(1.0, float(np.max(np.abs(psi.fourier)))):
        raise DomainError(f"psi must have mean zero (mean = {psi.mean:.3g})")


def solve_full(psi: AnalyticObservable, alpha, h_out: float | None = None,
               cf: CFExpansion | None = None) -> FullSolution:
    """Exact solution phi_j = psi_j / (exp(2 pi i j alpha) - 1), phi_0 = 0.

    Only for frequencies whose estimated beta is below the strip width of
    psi; otherwise a RegimeError points to solve_truncated.
    """
    _require_mean_zero(psi)
    freq = as_frequency(alpha)
    cf = cf or cf_expand(freq)
    beta = beta_estimate(cf).value
    if beta >= psi.h:
        raise RegimeError(f"beta estimate {beta:.3g} >= strip width {psi.h:.3g}; use solve_truncated")
    h_out = psi.h / 2 if h_out is None else h_out
    den = divisors(psi.modes, freq)
    coef = np.zeros_like(psi.fourier)
    nz = psi.modes != 0
    coef[nz] = psi.fourier[nz] / den[nz]
    phi = AnalyticObservable(coef, h_out)
    err = float(np.max(np.abs(coef * den - psi.fourier))) if psi.J else 0.0
    return FullSolution(phi, phi.strip_norm(h_out), beta, err)


@dataclass
class BoundReport:
    index: int
    q_n: int
    q_next: int
    N: int
    retained: int
    in_regime: bool           # q_{n+1} > 100 q_n
    psi_norm: float           # |psi|_h (l1)
    g_norm: float             # |g|_{h/2} (l1)
    g_norm_sup: float         # grid estimate of the sup norm
    g_bound: float
    residual_norm: float      # |psi - (g(. + alpha) - g)|_{h/2} (l1)
    residual_bound: float
    coefficient_error: float  # max |g_j (e_j - 1) - psi_j| over retained modes
    min_divisor: float        # over retained j not divisible by q_n
    divisor_floor_ok: bool | None
    g_pass: bool
    residual_pass: bool

    @property
    def passed(self) -> bool:
        return self.g_pass and self.residual_pass


def solve_truncated(psi: AnalyticObservable, alpha, cf: CFExpansion | None = None,
                    k_index: int = 0, h: float | None = None):
    """Truncated solution on 0 < |j| <= N = floor(q_{n+1} / 6), n = k_index.

    Returns (g, report).  The report compares the measured |g|_{h/2} and
    residual norm with
        |g|_{h/2}        <= 8 (q_n + exp(-(h/2) q_n) q_{n+1}) |psi|_h
        |residual|_{h/2} <= exp(-q_{n+1} h / 20) |psi|_h.
    """
    _require_mean_zero(psi)
    freq = as_frequency(alpha)
    cf = cf or cf_expand(freq)
    h = psi.h if h is None else h
    if k_index < 0 or k_index + 1 >= len(cf.convergents) or k_index + 1 > cf.trustworthy:
        raise CFIndexError(f"k_index={k_index} needs convergents n and n+1 inside the trusted "
                           f"prefix of length {cf.trustworthy}")
    qn = cf.convergents[k_index][1]
    qn1 = cf.convergents[k_index + 1][1]
    N = qn1 // 6
    modes = psi.modes
    keep = (modes != 0) & (np.abs(modes) <= min(N, psi.J))
    den = divisors(modes, freq)
    coef = np.zeros_like(psi.fourier)
    coef[keep] = psi.fourier[keep] / den[keep]
    g = AnalyticObservable(coef, h / 2)
    # the residual is exactly the unretained tail of psi; float roundoff on
    # retained modes is reported separately as coefficient_error
    residual = AnalyticObservable(np.where(keep, 0.0, psi.fourier), h / 2)

    psi_norm = psi.strip_norm(h)
    g_norm = g.strip_norm(h / 2)
    g_sup = g.sup_estimate(h / 2)
    g_bound = 8.0 * (qn + math.exp(-(h / 2) * qn) * qn1) * psi_norm
    res_norm = residual.strip_norm(h / 2)
    res_bound = math.exp(-qn1 * h / 20.0) * psi_norm
    cerr = float(np.max(np.abs(coef[keep] * den[keep] - psi.fourier[keep]))) if keep.any() else 0.0

    off = keep & (modes % qn != 0)
    min_div = float(np.min(np.abs(den[off]))) if off.any() else math.inf
    regime = qn1 > 100 * qn
    floor_ok = (min_div >= 1.0 / qn) if regime else None
    report = BoundReport(k_index, qn, qn1, N, int(keep.sum()), regime, psi_norm, g_norm, g_sup,
                         g_bound, res_norm, res_bound, cerr, min_div, floor_ok,
                         g_pass=min(g_norm, g_sup) <= g_bound, residual_pass=res_norm <= res_bound)
    return g, report


def rotation_matrix(theta) -> np.ndarray:
    """R_theta = [[cos 2 pi theta, -sin 2 pi theta], [sin 2 pi theta, cos 2 pi theta]]."""
    t = 2 * math.pi * np.asarray(theta)
    c, s = np.cos(t), np.sin(t)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


@dataclass
class RotationCocycle:
    """x -> R_{defect(x)} over x -> x + alpha, after conjugation by R_{conjugacy(x)}."""

    alpha: Frequency
    defect: AnalyticObservable
    conjugacy: AnalyticObservable
    defect_norm: float

    def matrix(self, x) -> np.ndarray:
        return rotation_matrix(np.real(self.defect(x)))


def rotations_conjugate(psi: AnalyticObservable, alpha, g: AnalyticObservable | None = None) -> RotationCocycle:
    """Conjugate the rotation cocycle R_{psi(x)} by R_{g(x)}.

    R_{g(x + alpha)}^{-1} R_{psi(x)} R_{g(x)} = R_{eps'(x)} with
    eps' = psi - (g(. + alpha) - g); the norm is taken at the strip of g.
    """
    freq = as_frequency(alpha)
    if g is None:
        g = AnalyticObservable(np.zeros(1, dtype=complex), psi.h)
    new = psi - coboundary(g, freq)
    h_new = min(psi.h, g.h)
    new = new.with_strip(h_new)
    return RotationCocycle(freq, new, g, new.strip_norm(h_new))
