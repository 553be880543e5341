"""Piecewise-affine profiles eps -> L_eps(E), acceleration and T-acceleration.

The profile is convex and piecewise affine with slopes in 2*pi*Z.  Fitting
is a small dynamic program over contiguous segments of the eps grid, each
carrying an integer slope j (strictly increasing left to right) and a free
intercept; a per-segment penalty stops it from splitting noise.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .arithmetic import as_frequency
from .cocycles import TrigPolynomial, lyapunov_grid
from .errors import DataQualityError, DomainError

TWO_PI = 2.0 * math.pi


@dataclass
class AccelerationConfig:
    eps_grid: Sequence[float] | None = None
    n: int = 10_000
    phases: int = 32
    slope_tol: float = 0.1
    noise_floor: float = 1e-3
    penalty: float = 25.0
    x0: float = 0.0


def default_eps_grid(strip_width: float, size: int = 24) -> np.ndarray:
    """0, then geometric points near 0, then uniform up to 0.6 h."""
    top = 0.6 * strip_width
    n_geo = 8
    lo, hi = 0.005, min(0.05, top / 4)
    geo = np.geomspace(lo, hi, n_geo)
    uni = np.linspace(hi, top, size - n_geo)[1:]
    return np.concatenate([[0.0], geo, uni])


@dataclass
class EpsilonProfile:
    E: float
    eps_samples: np.ndarray
    L_samples: np.ndarray
    stderrs: np.ndarray
    breakpoints: list = field(default_factory=list)
    slopes_raw: list = field(default_factory=list)
    slopes_quantized: list = field(default_factory=list)
    intercepts: list = field(default_factory=list)
    segments: list = field(default_factory=list)
    omega: int | None = None
    omega_bar: int | None = None
    eps1: float | None = None
    fitted: bool = False
    quantization_failure: bool = False
    max_residual: float = float("nan")

    @property
    def decided(self) -> bool:
        return self.fitted and not self.quantization_failure

    def model(self, eps) -> np.ndarray:
        """Evaluate the fitted max-of-lines at eps."""
        eps = np.asarray(eps, dtype=float)
        lines = [c + TWO_PI * j * eps for c, j in zip(self.intercepts, self.slopes_quantized)]
        return np.max(lines, axis=0)


def _check_grid(v: TrigPolynomial, eps_grid) -> np.ndarray:
    g = np.asarray(eps_grid, dtype=float)
    if g.ndim != 1 or g.size < 8:
        raise DomainError("eps grid needs at least 8 points")
    if np.any(np.diff(g) <= 0):
        raise DomainError("eps grid must be strictly increasing")
    if g[0] < 0 or g[-1] >= v.strip_width:
        raise DomainError(f"eps grid must lie in [0, strip_width={v.strip_width})")
    return g


def sample_profile(v: TrigPolynomial, alpha, E: float, eps_grid=None, n: int = 10_000,
                   phases: int = 32, x0: float = 0.0) -> EpsilonProfile:
    grid = default_eps_grid(v.strip_width) if eps_grid is None else eps_grid
    grid = _check_grid(v, grid)
    est = lyapunov_grid(v, as_frequency(alpha), [E], grid, n=n, phases=phases, x0=x0)
    return EpsilonProfile(float(np.real(E)), grid, est.L[0], est.stderr[0])


def sample_profiles(v: TrigPolynomial, alpha, energies, eps_grid=None, n: int = 10_000,
                    phases: int = 32, x0: float = 0.0) -> list[EpsilonProfile]:
    """Profiles for many energies from a single batched Lyapunov run."""
    grid = default_eps_grid(v.strip_width) if eps_grid is None else eps_grid
    grid = _check_grid(v, grid)
    Es = np.atleast_1d(np.asarray(energies, dtype=float))
    if Es.size == 0:
        return []
    est = lyapunov_grid(v, as_frequency(alpha), Es, grid, n=n, phases=phases, x0=x0)
    return [EpsilonProfile(float(E), grid, est.L[i], est.stderr[i]) for i, E in enumerate(Es)]


def convexity_violation(eps, L, se, floor: float = 1e-3) -> float:
    """Largest excess of a sample over the chord of its neighbours, in units
    of the allowed tolerance (values > 1 are violations)."""
    worst = 0.0
    for i in range(1, len(eps) - 1):
        t = (eps[i] - eps[i - 1]) / (eps[i + 1] - eps[i - 1])
        chord = (1 - t) * L[i - 1] + t * L[i + 1]
        tol = 3.0 * math.sqrt(se[i - 1] ** 2 + se[i] ** 2 + se[i + 1] ** 2) + floor
        worst = max(worst, (L[i] - chord) / tol)
    return worst


def _segment_cost(eps, L, w, j):
    """Weighted SSE of the best line with slope 2 pi j, and its intercept."""
    r = L - TWO_PI * j * eps
    c = np.sum(w * r) / np.sum(w)
    return float(np.sum(w * (r - c) ** 2)), float(c)


def fit_profile(profile: EpsilonProfile, slope_tol: float = 0.1, max_slope: int | None = None,
                noise_floor: float = 1e-3, penalty: float = 25.0) -> EpsilonProfile:
    """Convex piecewise-affine fit with slopes 2 pi j, j = 0..max_slope.

    Raises DataQualityError if the samples are not convex within 3 stderr
    (plus ``noise_floor``).  A fit whose free per-segment slopes sit farther
    than slope_tol * 2 pi from the assigned multiple is kept but flagged
    (``quantization_failure``), and omega / omega_bar are left undecided.
    """
    eps = np.asarray(profile.eps_samples, dtype=float)
    L = np.asarray(profile.L_samples, dtype=float)
    se = np.nan_to_num(np.asarray(profile.stderrs, dtype=float))
    ns = eps.size
    viol = convexity_violation(eps, L, se, noise_floor)
    if viol > 1.0:
        raise DataQualityError(f"profile at E={profile.E} is not convex (excess {viol:.2f} x tol)")

    J = 1 if max_slope is None else int(max_slope)
    sigma = np.maximum(se, noise_floor)
    w = 1.0 / sigma ** 2

    # best[e][j]: min cost of covering samples 0..e-1 with last slope j
    INF = math.inf
    best = [[INF] * (J + 1) for _ in range(ns + 1)]
    back = [[None] * (J + 1) for _ in range(ns + 1)]
    seg_cache = {}

    def seg(a, b, j):
        key = (a, b, j)
        if key not in seg_cache:
            seg_cache[key] = _segment_cost(eps[a:b], L[a:b], w[a:b], j)
        return seg_cache[key]

    for e in range(1, ns + 1):
        for j in range(J + 1):
            c0, _ = seg(0, e, j)
            cand, arg = c0, (0, None)
            for s in range(1, e):
                for jp in range(j):
                    if best[s][jp] < INF:
                        c = best[s][jp] + seg(s, e, j)[0] + penalty
                        if c < cand:
                            cand, arg = c, (s, jp)
            best[e][j] = cand
            back[e][j] = arg
    j_end = int(np.argmin(best[ns]))
    segments = []
    e, j = ns, j_end
    while True:
        s, jp = back[e][j]
        segments.append((s, e, j))
        if jp is None:
            break
        e, j = s, jp
    segments.reverse()

    slopes_q, intercepts, raw = [], [], []
    failure = False
    for a, b, j in segments:
        _, c = seg(a, b, j)
        slopes_q.append(j)
        intercepts.append(c)
        if b - a >= 2:
            A = np.vstack([np.ones(b - a), eps[a:b]]).T
            coef = np.linalg.lstsq(A * np.sqrt(w[a:b, None]), L[a:b] * np.sqrt(w[a:b]), rcond=None)[0]
            r = float(coef[1])
            if abs(r - TWO_PI * j) > slope_tol * TWO_PI:
                failure = True
        else:
            r = float("nan")
        raw.append(r)
    bps = []
    for i in range(len(segments) - 1):
        j0, j1 = slopes_q[i], slopes_q[i + 1]
        bps.append((intercepts[i] - intercepts[i + 1]) / (TWO_PI * (j1 - j0)))

    out = replace(profile, breakpoints=bps, slopes_raw=raw, slopes_quantized=slopes_q,
                  intercepts=intercepts, segments=[(a, b) for a, b, _ in segments],
                  fitted=True, quantization_failure=failure)
    out.max_residual = float(np.max(np.abs(out.model(eps) - L)))
    if failure:
        out.omega = out.omega_bar = out.eps1 = None
        return out
    out.omega = slopes_q[0]
    if out.omega > 0:
        out.omega_bar, out.eps1 = out.omega, 0.0
    elif len(slopes_q) > 1:
        out.omega_bar, out.eps1 = slopes_q[1], max(bps[0], 0.0)
    else:
        out.omega_bar, out.eps1 = 1, None
    return out


class Accelerations(NamedTuple):
    omega: int | None
    omega_bar: int | None
    eps1: float | None
    profile: EpsilonProfile


def accelerations(v: TrigPolynomial, alpha, E: float, config: AccelerationConfig | None = None) -> Accelerations:
    cfg = config or AccelerationConfig()
    prof = sample_profile(v, alpha, E, cfg.eps_grid, cfg.n, cfg.phases, cfg.x0)
    fit = fit_profile(prof, cfg.slope_tol, max_slope=max(1, v.degree),
                      noise_floor=cfg.noise_floor, penalty=cfg.penalty)
    return Accelerations(fit.omega, fit.omega_bar, fit.eps1, fit)


@dataclass
class Type1Record:
    E: float
    omega: int | None
    omega_bar: int | None
    is_type1: bool | None   # None: undecided
    quantization_flag: bool
    note: str = ""


@dataclass
class Type1Report:
    records: list
    verdict: bool
    failures: list
    undecided: list
    warning: str | None = None

    @property
    def decided(self) -> list:
        return [r for r in self.records if r.is_type1 is not None]


def classify_profiles(profiles, slope_tol=0.1, max_slope=1, noise_floor=1e-3,
                      penalty=25.0) -> list[Type1Record]:
    recs = []
    for p in profiles:
        try:
            f = fit_profile(p, slope_tol, max_slope=max_slope, noise_floor=noise_floor, penalty=penalty)
        except DataQualityError as exc:
            recs.append(Type1Record(p.E, None, None, None, True, str(exc)))
            continue
        if f.quantization_failure:
            recs.append(Type1Record(p.E, None, None, None, True, "slope quantization failed"))
        else:
            recs.append(Type1Record(p.E, f.omega, f.omega_bar, f.omega_bar == 1, False))
    return recs


def classify_type1(v: TrigPolynomial, alpha, E_set, config: AccelerationConfig | None = None) -> Type1Report:
    """Per-energy T-acceleration verdicts and the operator-level verdict.

    The operator verdict is True only if every sampled energy is decided
    and has omega_bar = 1.
    """
    cfg = config or AccelerationConfig()
    Es = list(np.atleast_1d(np.asarray(E_set, dtype=float)))
    if not Es:
        msg = "empty energy set: verdict is vacuous"
        warnings.warn(msg, stacklevel=2)
        return Type1Report([], True, [], [], msg)
    profiles = sample_profiles(v, alpha, Es, cfg.eps_grid, cfg.n, cfg.phases, cfg.x0)
    recs = classify_profiles(profiles, cfg.slope_tol, max(1, v.degree), cfg.noise_floor, cfg.penalty)
    failures = [r for r in recs if r.is_type1 is False]
    undecided = [r for r in recs if r.is_type1 is None]
    return Type1Report(recs, not failures and not undecided, failures, undecided)
