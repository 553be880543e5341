"""Spectra of finite truncations, periodic approximants, IDS, rotation
number, and gap labels."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .arithmetic import Frequency, as_frequency
from .cocycles import TrigPolynomial, phase_lattice
from .errors import DomainError, SizeError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class DualOperator:
    """Finite-range operator (L u)(n) = sum_k v_k u(n+k) + w(theta + n alpha) u(n)."""
    v: TrigPolynomial
    w: TrigPolynomial = None

    def __post_init__(self):
        if self.w is None:
            object.__setattr__(self, "w", TrigPolynomial.cosine(1.0))
        if self.v.degree < 1:
            raise DomainError("dual operator needs a non-constant v")


@dataclass
class Gap:
    left: float
    right: float
    ids: float
    label: int | None = None
    residual: float = float("nan")

    @property
    def width(self):
        return self.right - self.left


@dataclass
class SpectrumApprox:
    points: np.ndarray
    bands: list = field(default_factory=list)
    gaps: list = field(default_factory=list)
    reliable: bool = True
    meta: dict = field(default_factory=dict)


def _bandwidth(op) -> int:
    return 1 if isinstance(op, TrigPolynomial) else op.v.degree


def _banded(op, alpha: float, N: int, x: float):
    """Upper banded storage (scipy eig_banded layout) of the N x N truncation."""
    n = np.arange(N)
    if isinstance(op, TrigPolynomial):
        diag = op(np.mod(x + n * alpha, 1.0))
        ab = np.zeros((2, N))
        ab[1] = diag
        ab[0, 1:] = 1.0
        return ab
    d = op.v.degree
    diag = op.w(np.mod(x + n * alpha, 1.0)) + op.v.hat(0).real
    hops = [op.v.hat(k) for k in range(1, d + 1)]
    dtype = complex if any(h.imag != 0 for h in hops) else float
    ab = np.zeros((d + 1, N), dtype=dtype)
    ab[d] = diag
    for k, h in enumerate(hops, 1):
        ab[d - k, k:] = h if dtype is complex else h.real
    return ab


def dense_truncation(op, alpha, N: int, x: float = 0.0) -> np.ndarray:
    """Dense N x N truncation (Dirichlet cut)."""
    ab = _banded(op, as_frequency(alpha).value, N, x)
    u = ab.shape[0] - 1
    H = np.diag(ab[u]).astype(ab.dtype)
    for k in range(1, u + 1):
        H += np.diag(ab[u - k, k:], k) + np.diag(np.conj(ab[u - k, k:]), -k)
    return H


def truncated_spectrum(op, alpha, N: int, phases=8, x0: float = 0.0, trim: bool = True,
                       trim_layer: int | None = None) -> SpectrumApprox:
    """Merged eigenvalues of N x N truncations over sampled phases.

    With ``trim`` the eigenvalues whose eigenvectors carry more than half
    their mass in the outer ``trim_layer`` sites at either end are dropped:
    these are boundary states created by the cut, and they sit inside gaps.
    """
    alpha = as_frequency(alpha)
    xs = phase_lattice(phases, x0)
    reliable = N >= 50
    if not reliable:
        warnings.warn(f"N={N} < 50: truncation spectrum dominated by boundary effects", stacklevel=2)
    bw = _bandwidth(op)
    layer = trim_layer or max(4 * bw, 10)
    layer = min(layer, max(1, N // 4))
    pts = []
    dropped = 0
    for x in xs:
        ab = _banded(op, alpha.value, N, x)
        if trim:
            ev, V = sla.eig_banded(ab, lower=False)
            mass = (np.abs(V[:layer]) ** 2).sum(0) + (np.abs(V[-layer:]) ** 2).sum(0)
            keep = mass < 0.5
            dropped += int((~keep).sum())
            pts.append(ev[keep])
        else:
            pts.append(sla.eig_banded(ab, lower=False, eigvals_only=True))
    points = np.sort(np.concatenate(pts))
    return SpectrumApprox(points, reliable=reliable,
                          meta={"N": N, "phases": xs.size, "trimmed": dropped, "trim_layer": layer if trim else 0})


def periodic_matrix(v: TrigPolynomial, p: int, q: int, x: float, theta: float) -> np.ndarray:
    """q x q Bloch matrix of the p/q-periodic operator with quasimomentum theta."""
    vals = v(np.mod(x + np.arange(q) * p / q, 1.0))
    H = np.diag(vals).astype(complex)
    for i in range(q - 1):
        H[i, i + 1] += 1.0
        H[i + 1, i] += 1.0
    H[q - 1, 0] += np.exp(1j * theta)
    H[0, q - 1] += np.exp(-1j * theta)
    return H


def discriminant(v: TrigPolynomial, p: int, q: int, x: float, E) -> np.ndarray:
    """tr A_q(x; E) for the p/q-periodic Schrodinger cocycle."""
    E = np.atleast_1d(np.asarray(E, dtype=float))
    vals = v(np.mod(x + np.arange(q) * p / q, 1.0))
    a = np.ones_like(E)
    b = np.zeros_like(E)
    c = np.zeros_like(E)
    d = np.ones_like(E)
    for k in range(q):
        t = E - vals[k]
        # [[t, -1], [1, 0]] @ [[a, b], [c, d]]
        a, b, c, d = t * a - c, t * b - d, a, b
    return a + d


def schrodinger_bands(v: TrigPolynomial, alpha, bloch_phases: int = 1, x0: float = 0.0,
                      check_edges: bool = True) -> SpectrumApprox:
    """Band spectrum of the p/q-periodic operator, union over phases.

    Band edges are the eigenvalues of the periodic (theta=0) and
    antiperiodic (theta=pi) Bloch matrices, i.e. the roots of tr A_q = +-2;
    after merging the 2q sorted values, band j is [e_{2j}, e_{2j+1}].
    Phases are x0 + j/(P q): the spectrum depends on x only mod 1/q.
    """
    if isinstance(alpha, tuple):
        p, q = (int(t) for t in alpha)
        if q < 1 or not (0 <= p < q) or math.gcd(p, q) != 1:
            raise DomainError(f"{p}/{q} is not a reduced fraction in [0, 1)")
    else:
        alpha = as_frequency(alpha)
        if alpha.p is None:
            raise DomainError("schrodinger_bands needs a rational frequency p/q")
        p, q = alpha.p, alpha.q
    if q > 2000:
        raise SizeError(f"q={q} exceeds 2000", largest_safe=2000)
    P = max(1, int(bloch_phases))
    xs = x0 + np.arange(P) / (P * q)
    intervals = []
    edge_dev = 0.0
    per_phase = []
    for x in xs:
        e0 = np.linalg.eigvalsh(periodic_matrix(v, p, q, x, 0.0))
        e1 = np.linalg.eigvalsh(periodic_matrix(v, p, q, x, math.pi))
        edges = np.sort(np.concatenate([e0, e1]))
        bands = [(edges[2 * j], edges[2 * j + 1]) for j in range(q)]
        per_phase.append(bands)
        intervals.extend(bands)
        if check_edges and q <= 200:
            tr = discriminant(v, p, q, x, edges)
            edge_dev = max(edge_dev, float(np.max(np.abs(np.abs(tr) - 2.0))))
    merged = merge_intervals(intervals)
    return SpectrumApprox(np.array([]), bands=merged, reliable=True,
                          meta={"p": p, "q": q, "phases": P, "edge_trace_deviation": edge_dev,
                                "per_phase_bands": per_phase})


def merge_intervals(intervals) -> list:
    out = []
    for a, b in sorted(intervals):
        if out and a <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((float(a), float(b)))
    return out


def ids(op, alpha, E, N: int = 1000, phases=8, x0: float = 0.0):
    """Fraction of truncation eigenvalues <= E, averaged over phases."""
    alpha = as_frequency(alpha)
    if N < 100:
        warnings.warn(f"N={N} < 100: IDS estimate is coarse", stacklevel=2)
    xs = phase_lattice(phases, x0)
    Es = np.asarray(E, dtype=float)
    counts = np.zeros(Es.shape)
    for x in xs:
        ev = sla.eig_banded(_banded(op, alpha.value, N, x), lower=False, eigvals_only=True)
        counts = counts + np.searchsorted(ev, Es, side="right") / N
    out = counts / xs.size
    return float(out) if out.ndim == 0 else out


@dataclass
class RotationData:
    E: float
    rho: float
    N: float
    rho_from_ids: float | None = None
    N_from_ids: float | None = None

    @property
    def discrepancy(self) -> float | None:
        if self.N_from_ids is None:
            return None
        return abs(self.N - self.N_from_ids)


def rotation_number_dynamic(v: TrigPolynomial, alpha, E, n: int = 10_000, phases=8,
                            x0: float = 0.0) -> np.ndarray:
    """Fibered rotation number in [0, 1/2] by lifting the projective action.

    The line angle phi is kept in (-pi/2, pi/2]; the image of
    (cos phi, sin phi) under [[t, -1], [1, 0]] has angle in (0, pi], and the
    increment new - phi is averaged along the orbit.
    """
    alpha = as_frequency(alpha)
    Es = np.atleast_1d(np.asarray(E, dtype=float))
    xs = phase_lattice(phases, x0)
    P = xs.size
    Eb = np.repeat(Es, P)
    xb = np.tile(xs, Es.size)
    phi = np.zeros(Eb.shape)
    total = np.zeros(Eb.shape)
    for k in range(n):
        t = Eb - v(np.mod(xb + k * alpha.value, 1.0))
        c, s = np.cos(phi), np.sin(phi)
        new = np.arctan2(c, t * c - s)
        total += new - phi
        phi = np.where(new > math.pi / 2, new - math.pi, new)
    rho = (total / (TWO_PI * n)).reshape(Es.size, P).mean(axis=1)
    return np.clip(rho, 0.0, 0.5)


def rotation_number(v: TrigPolynomial, alpha, E, n: int = 10_000, phases=8, x0: float = 0.0,
                    ids_N: int | None = 1000):
    """RotationData for each E: rho from dynamics, N = 1 - 2 rho, and the
    truncation IDS as an independent cross-fill (skipped if ids_N is None)."""
    if n < 1000:
        warnings.warn(f"n={n} < 1000 steps: rotation number is coarse", stacklevel=2)
    Es = np.atleast_1d(np.asarray(E, dtype=float))
    rho = rotation_number_dynamic(v, alpha, Es, n, phases, x0)
    N_ids = ids(v, alpha, Es, ids_N, phases, x0) if ids_N else None
    out = []
    for i, e in enumerate(Es):
        ni = None if N_ids is None else float(np.atleast_1d(N_ids)[i])
        out.append(RotationData(float(e), float(rho[i]), float(1 - 2 * rho[i]),
                                None if ni is None else (1 - ni) / 2, ni))
    return out[0] if np.ndim(E) == 0 else out


def _circ(x):
    x = np.mod(x, 1.0)
    return np.minimum(x, 1.0 - x)


def label_ids(value: float, alpha, k_max: int = 30):
    """Nearest k alpha mod 1 to value, |k| <= k_max; returns (k, residual)."""
    a = as_frequency(alpha)
    ks = np.arange(-k_max, k_max + 1)
    fr = np.array([float((k * a.exact()) % 1) for k in ks])
    res = _circ(value - fr)
    i = int(np.argmin(res))
    return int(ks[i]), float(res[i])


def detect_and_label_gaps(spec_points: SpectrumApprox, alpha, k_max: int = 30,
                          min_gap: float = 1e-3, label_tol: float = 5e-3,
                          window: int = 10, phases: int | None = None) -> SpectrumApprox:
    """Detect gaps in a point cloud and label them by k alpha mod 1.

    A spacing counts as a gap when it exceeds both ``min_gap`` and ten times
    the local mean spacing of truncation levels.  With P merged phase samples
    every level shows up P times, so the level spacing is P times the mean
    merged spacing over ``window * P`` neighbours on each side.  Each gap is
    labeled by the nearest k alpha mod 1 (|k| <= k_max) to its IDS value;
    the label is None when the residual exceeds ``label_tol``.
    """
    pts = np.asarray(spec_points.points, dtype=float)
    M = pts.size
    P = int(phases or spec_points.meta.get("phases", 1))
    W = window * P
    gaps = []
    if M >= 2:
        sp = np.diff(pts)
        csum = np.concatenate([[0.0], np.cumsum(sp)])
        a = as_frequency(alpha)
        ks = np.arange(-k_max, k_max + 1)
        fr = np.array([float((int(k) * a.exact()) % 1) for k in ks])
        for i, s in enumerate(sp):
            lo, hi = max(0, i - W), min(sp.size, i + W + 1)
            cnt = hi - lo - 1
            local = (csum[hi] - csum[lo] - s) / cnt if cnt > 0 else 0.0
            if s > max(min_gap, 10.0 * P * local):
                N_val = (i + 1) / M
                res = _circ(N_val - fr)
                j = int(np.argmin(res))
                lab = int(ks[j]) if res[j] <= label_tol else None
                gaps.append(Gap(float(pts[i]), float(pts[i + 1]), N_val, lab, float(res[j])))
    return SpectrumApprox(pts, list(spec_points.bands), gaps, spec_points.reliable,
                          dict(spec_points.meta, k_max=k_max, min_gap=min_gap, label_tol=label_tol))


def hausdorff(a, b) -> float:
    """Two-sided Hausdorff distance between finite point sets on the line."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        return math.inf

    def one(x, y):
        i = np.clip(np.searchsorted(y, x), 1, y.size - 1) if y.size > 1 else np.zeros(x.size, int)
        if y.size == 1:
            return float(np.max(np.abs(x - y[0])))
        return float(np.max(np.minimum(np.abs(x - y[i - 1]), np.abs(x - y[i]))))

    return max(one(a, b), one(b, a))


def hausdorff_bands_points(bands, points) -> float:
    """Hausdorff distance between a union of closed intervals and a point set."""
    pts = np.sort(np.asarray(points, dtype=float))
    lo = np.array([b[0] for b in bands])
    hi = np.array([b[1] for b in bands])
    # points -> bands
    j = np.searchsorted(lo, pts, side="right") - 1
    d_in = np.where((j >= 0) & (pts <= hi[np.clip(j, 0, None)]), 0.0, np.inf)
    d_left = np.where(j >= 0, pts - hi[np.clip(j, 0, None)], np.inf)
    jn = np.clip(j + 1, 0, lo.size - 1)
    d_right = np.where(j + 1 < lo.size, lo[jn] - pts, np.inf)
    d_pts = np.minimum(d_in, np.minimum(np.abs(d_left), np.abs(d_right)))
    worst = float(np.max(d_pts)) if pts.size else math.inf
    # bands -> points: farthest spot in each band from the cloud
    for a, b in bands:
        cand = [a, b]
        inside = pts[(pts >= a) & (pts <= b)]
        if inside.size > 1:
            cand.extend(0.5 * (inside[1:] + inside[:-1]))
        cand = np.array(cand)
        k = np.clip(np.searchsorted(pts, cand), 1, pts.size - 1)
        dist = np.minimum(np.abs(cand - pts[k - 1]), np.abs(cand - pts[k]))
        worst = max(worst, float(dist.max()))
    return worst
