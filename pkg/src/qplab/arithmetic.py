"""Continued fractions of the rotation frequency.

Everything that feeds a small-divisor estimate is done in exact integer /
rational arithmetic: a double ``alpha`` is an exact dyadic rational, so
``Fraction(alpha)`` loses nothing, and ``||k alpha||`` is evaluated as an
integer residue.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple, Sequence

import mpmath

from .errors import CFIndexError, DomainError, InsufficientDataError, SizeError

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
SILVER = math.sqrt(2.0) - 1.0


def convergents_from_quotients(quotients: Sequence[int]) -> list[tuple[int, int]]:
    """Convergents (p_k, q_k), k = 0..K, seeded with (p_0, q_0) = (0, 1)."""
    p_prev, q_prev = 1, 0
    p, q = 0, 1
    out = [(p, q)]
    for a in quotients:
        p, p_prev = a * p + p_prev, p
        q, q_prev = a * q + q_prev, q
        out.append((p, q))
    return out


def _fold(quotients: Sequence[int], tail: float = 0.0) -> float:
    """Evaluate [0; a_1, ..., a_K + tail] from the bottom up."""
    x = tail
    for a in reversed(quotients):
        x = 1.0 / (a + x)
    return x


def _euclid(x: Fraction, limit: int) -> tuple[list[int], Fraction]:
    """Quotients of x in (0,1) and the final remainder in [0,1)."""
    quotients = []
    r = x
    while r != 0 and len(quotients) < limit:
        inv = 1 / r
        a = inv.numerator // inv.denominator
        quotients.append(a)
        r = inv - a
    return quotients, r


@dataclass(frozen=True)
class Frequency:
    """Rotation number alpha in (0, 1).

    ``quotients`` is set for symbolic constructors (golden, silver,
    Liouville-type, explicit streams); those bypass the double-precision
    cap on the number of usable continued fraction terms.
    """

    value: float
    p: int | None = None
    q: int | None = None
    quotients: tuple[int, ...] | None = None
    name: str = "sample"

    def __post_init__(self):
        if not (0.0 < self.value < 1.0):
            raise DomainError(f"frequency must lie in (0,1), got {self.value!r}")
        if self.p is not None:
            if self.q is None or self.q <= 0 or math.gcd(self.p, self.q) != 1:
                raise DomainError("rational frequency needs p/q in lowest terms")

    @property
    def kind(self) -> str:
        return "rational" if self.p is not None else "irrational-sample"

    @classmethod
    def rational(cls, p: int, q: int) -> "Frequency":
        g = math.gcd(p, q)
        p, q = p // g, q // g
        if not (0 < p < q):
            raise DomainError(f"{p}/{q} is not in (0,1)")
        return cls(p / q, p=p, q=q, name=f"{p}/{q}")

    @classmethod
    def from_value(cls, x: float) -> "Frequency":
        return cls(float(x))

    @classmethod
    def from_quotients(cls, quotients: Sequence[int], name: str = "stream") -> "Frequency":
        qs = tuple(int(a) for a in quotients)
        if not qs or any(a < 1 for a in qs):
            raise DomainError("quotients must be positive integers")
        if qs == (1,):
            raise DomainError("[0; 1] = 1 is not in (0,1)")
        p, q = convergents_from_quotients(qs)[-1]
        return cls(p / q, quotients=qs, name=name)

    @classmethod
    def golden(cls, terms: int = 80) -> "Frequency":
        return cls(GOLDEN, quotients=(1,) * terms, name="golden")

    @classmethod
    def silver(cls, terms: int = 60) -> "Frequency":
        return cls(SILVER, quotients=(2,) * terms, name="silver")

    def exact(self) -> Fraction:
        """Best exact rational stand-in for alpha."""
        if self.p is not None:
            return Fraction(self.p, self.q)
        if self.quotients is not None:
            p, q = convergents_from_quotients(self.quotients)[-1]
            return Fraction(p, q)
        return Fraction(self.value)

    def __float__(self):
        return self.value


@dataclass(frozen=True)
class CFExpansion:
    quotients: tuple[int, ...]
    convergents: tuple[tuple[int, int], ...]
    trustworthy: int
    remainder: float = 0.0  # tail [0; a_{K+1}, ...] beyond the listed quotients
    exact_source: bool = False

    @property
    def q(self) -> list[int]:
        return [c[1] for c in self.convergents]

    @property
    def beta_hat(self) -> float | None:
        try:
            return beta_estimate(self).value
        except InsufficientDataError:
            return None

    def reconstruct(self, with_remainder: bool = True) -> float:
        return _fold(self.quotients, self.remainder if with_remainder else 0.0)


def cf_expand(alpha: Frequency, max_terms: int = 64) -> CFExpansion:
    """Continued fraction expansion of ``alpha``.

    For a plain double sample the expansion stops where the two ends of the
    rounding interval [alpha - ulp/2, alpha + ulp/2] stop sharing quotients;
    past that point the digits describe rounding noise, not alpha.
    """
    if not isinstance(alpha, Frequency):
        alpha = Frequency(float(alpha))
    if max_terms < 1:
        raise DomainError("max_terms must be >= 1")

    if alpha.p is not None:
        qs, r = _euclid(Fraction(alpha.p, alpha.q), max_terms)
        rem = float(r)
        return CFExpansion(tuple(qs), tuple(convergents_from_quotients(qs)),
                           len(qs), rem, True)

    if alpha.quotients is not None:
        qs = alpha.quotients[:max_terms]
        rest = alpha.quotients[max_terms:]
        rem = _fold(rest) if rest else 0.0
        if alpha.name in ("golden", "silver") and not rest:
            # periodic expansions: the tail equals alpha itself
            rem = alpha.value
        return CFExpansion(tuple(qs), tuple(convergents_from_quotients(qs)),
                           len(qs), rem, True)

    x = Fraction(alpha.value)
    half_ulp = Fraction(math.ulp(alpha.value)) / 2
    lo, _ = _euclid(x - half_ulp, max_terms + 1)
    hi, _ = _euclid(x + half_ulp, max_terms + 1)
    k = 0
    while k < min(len(lo), len(hi)) and lo[k] == hi[k]:
        k += 1
    k = min(k, max_terms)
    qs, r = _euclid(x, k)
    return CFExpansion(tuple(qs), tuple(convergents_from_quotients(qs)), k, float(r), False)


class BetaEstimate(NamedTuple):
    value: float
    index: int
    ratios: tuple[float, ...]


def beta_estimate(cf: CFExpansion, tail_start: int | None = None) -> BetaEstimate:
    """Finite-sample envelope of limsup ln q_{n+1} / q_n.

    The max is taken over the tail n >= tail_start (default: second half of
    the trustworthy prefix), so early transients such as ln 2 / 1 for the
    golden mean do not pin the estimate.
    """
    conv = cf.convergents[: cf.trustworthy + 1]
    if len(conv) < 3:
        raise InsufficientDataError(f"need at least 3 convergents, have {len(conv)}")
    qs = [c[1] for c in conv]
    ratios = tuple(math.log(qs[n + 1]) / qs[n] for n in range(len(qs) - 1))
    start = len(ratios) // 2 if tail_start is None else int(tail_start)
    start = min(max(start, 0), len(ratios) - 1)
    idx = max(range(start, len(ratios)), key=lambda n: ratios[n])
    return BetaEstimate(ratios[idx], idx, ratios)


def norm_frac(x: Fraction) -> Fraction:
    """||x||_{R/Z} for an exact rational."""
    f = x - math.floor(x)
    return min(f, 1 - f)


def norm_k_alpha(k: int, alpha: Frequency | Fraction) -> float:
    a = alpha.exact() if isinstance(alpha, Frequency) else Fraction(alpha)
    return float(norm_frac(k * a))


@dataclass
class QualityReport:
    n: int
    q_n: int
    q_next: int
    norm_qn: float
    lower: float
    upper: float
    two_sided_ok: bool
    floor_applies: bool
    floor_ok: bool | None
    min_norm_scanned: float
    scanned: int
    complete: bool
    worst_margin: float
    passed: bool
    notes: list[str] = field(default_factory=list)


def qn_quality_check(alpha: Frequency, cf: CFExpansion, n: int,
                     scan_cap: int = 1_000_000) -> QualityReport:
    """Check 1/(2q_{n+1}) <= ||q_n alpha|| <= 1/q_{n+1} and, when
    q_{n+1} > 100 q_n, ||k alpha|| >= 1/(4 q_n) for 0<|k|<q_{n+1}/6, k not a
    multiple of q_n.  All comparisons are exact."""
    if n < 0 or n + 1 > cf.trustworthy:
        raise CFIndexError(f"n={n} outside trustworthy prefix (length {cf.trustworthy})")
    a = alpha.exact()
    P, Q = a.numerator, a.denominator
    qn, qn1 = cf.convergents[n][1], cf.convergents[n + 1][1]

    def knorm(k):
        r = (k * P) % Q
        return Fraction(min(r, Q - r), Q)

    nq = knorm(qn)
    lo, hi = Fraction(1, 2 * qn1), Fraction(1, qn1)
    two_sided = lo <= nq <= hi
    margin = float(min(nq - lo, hi - nq) * qn1)

    kmax = (qn1 - 1) // 6  # 0 < k < q_{n+1}/6; negative k give the same norms
    limit = min(kmax, scan_cap)
    complete = limit == kmax
    applies = qn1 > 100 * qn
    floor = Fraction(1, 4 * qn)
    best = None
    r = 0
    for k in range(1, limit + 1):
        r += P
        if r >= Q:
            r %= Q
        if k % qn == 0:
            continue
        v = min(r, Q - r)
        if best is None or v < best:
            best = v
    min_norm = Fraction(best, Q) if best is not None else None
    floor_ok = None
    notes = []
    if applies:
        floor_ok = True if min_norm is None else (min_norm >= floor)
        if min_norm is not None:
            margin = min(margin, float(min_norm / floor - 1))
        if not complete:
            notes.append(f"scan truncated at k={limit} of {kmax}")
    passed = two_sided and (floor_ok is not False)
    return QualityReport(n, qn, qn1, float(nq), float(lo), float(hi), two_sided, applies,
                         floor_ok, float(min_norm) if min_norm is not None else math.inf,
                         limit, complete, margin, passed, notes)


class LiouvilleFrequency(NamedTuple):
    frequency: Frequency
    cf: CFExpansion
    ratios: tuple[float, ...]


def make_liouville(beta_target: float, terms: int, max_bits: int = 4096) -> LiouvilleFrequency:
    """Frequency whose denominators satisfy q_{n+1} ~ exp(beta_target q_n).

    Quotients: a_1 = 1, then a_{n+1} = ceil(exp(beta q_n) / q_n).  Each
    q_{n+1} exceeds exp(beta q_n), so every realized ratio ln q_{n+1}/q_n
    is above beta; the excess is at most ln(1 + (q_n + q_{n-1}) e^{-beta q_n}) / q_n.
    """
    if not beta_target > 0.0:
        raise DomainError("beta_target must be positive")
    if not (2 <= terms <= 12):
        raise DomainError("terms must lie in [2, 12]")
    quotients = [1]
    q_prev, q = 1, 1
    while len(quotients) < terms:
        bits = beta_target * float(min(q, 2 ** 1000)) / math.log(2.0)
        if bits > max_bits:
            raise SizeError(
                f"q_{len(quotients) + 1} would need ~{bits:.3g} bits (cap {max_bits})",
                largest_safe=len(quotients))
        with mpmath.workprec(int(bits) + 96):
            a = int(mpmath.ceil(mpmath.exp(mpmath.mpf(beta_target) * q) / q))
        a = max(a, 1)
        quotients.append(a)
        q, q_prev = a * q + q_prev, q
    freq = Frequency.from_quotients(quotients, name=f"liouville({beta_target:g})")
    cf = cf_expand(freq, len(quotients))
    qs = cf.q
    ratios = tuple(math.log(qs[i + 1]) / qs[i] for i in range(len(qs) - 1))
    return LiouvilleFrequency(freq, cf, ratios)


def as_frequency(alpha) -> Frequency:
    if isinstance(alpha, Frequency):
        return alpha
    if isinstance(alpha, LiouvilleFrequency):
        return alpha.frequency
    return Frequency(float(alpha))
