"""Vectorized builders for the dual finite-range transfer matrices.

Shared by ``cocycles`` (as cocycle families) and ``duality`` (public API).
Phases are arrays of (possibly complex) points on the circle; the
imaginary part carries the strip shift.
"""
import numpy as np


def hop_matrix(v):
    """Upper-triangular C with C[i, j] = v_{d+i-j} for j >= i."""
    d = v.degree
    C = np.zeros((d, d), dtype=complex)
    for i in range(d):
        for j in range(i, d):
            C[i, j] = v.hat(d + i - j)
    return C


def form_matrix(C):
    d = C.shape[0]
    Z = np.zeros((d, d), dtype=complex)
    return np.block([[Z, -C.conj().T], [C, Z]])


def step_batch(v, w, E, thetas):
    """One-step dual matrices, shape (B, 2d, 2d)."""
    d = v.degree
    thetas = np.atleast_1d(np.asarray(thetas))
    E = np.broadcast_to(np.asarray(E, dtype=complex), thetas.shape)
    B = thetas.shape[0]
    m = 2 * d
    vd = v.hat(d)
    A = np.zeros((B, m, m), dtype=complex)
    for j in range(d - 1):
        A[:, 0, j] = -v.hat(d - 1 - j) / vd
    A[:, 0, d - 1] = (E - w.at(thetas) - v.hat(0)) / vd
    for j in range(d):
        A[:, 0, d + j] = -v.hat(-(j + 1)) / vd
    idx = np.arange(1, m)
    A[:, idx, idx - 1] = 1.0
    return A


def step_inverse_batch(v, w, E, thetas):
    """Closed-form inverse of the companion step: rows shift up, last row
    solves the first-row relation."""
    A = step_batch(v, w, E, thetas)
    B, m, _ = A.shape
    r = A[:, 0, :]
    Ai = np.zeros_like(A)
    idx = np.arange(m - 1)
    Ai[:, idx, idx + 1] = 1.0
    last = r[:, m - 1]
    Ai[:, m - 1, 0] = 1.0 / last
    Ai[:, m - 1, 1:] = -r[:, : m - 1] / last[:, None]
    return Ai


def band_matrix(v, w, thetas, alpha):
    """Hermitian (at real phase) d x d block B(theta), shape (B, d, d)."""
    d = v.degree
    thetas = np.atleast_1d(np.asarray(thetas))
    Bm = np.zeros((thetas.shape[0], d, d), dtype=complex)
    for i in range(d):
        Bm[:, i, i] = w.at(thetas + (d - 1 - i) * alpha) + v.hat(0)
        for j in range(d):
            if j > i:
                Bm[:, i, j] = v.hat(-(j - i))
            elif j < i:
                Bm[:, i, j] = v.hat(i - j)
    return Bm


def block_batch(v, w, E, thetas, alpha):
    """Block matrices [[C^{-1}(E - B), -C^{-1} C^*], [I, 0]], shape (B, 2d, 2d)."""
    d = v.degree
    C = hop_matrix(v)
    Ci = np.linalg.inv(C)
    Bm = band_matrix(v, w, thetas, alpha)
    E = np.asarray(E, dtype=complex).reshape(-1, 1, 1) if np.ndim(E) else complex(E)
    top_left = Ci @ (E * np.eye(d) - Bm)
    n = Bm.shape[0]
    out = np.zeros((n, 2 * d, 2 * d), dtype=complex)
    out[:, :d, :d] = top_left
    out[:, :d, d:] = -Ci @ C.conj().T
    out[:, d:, :d] = np.eye(d)
    return out


def block_inverse_batch(v, w, E, thetas, alpha):
    """[[0, I], [-(C^*)^{-1} C, (C^*)^{-1}(E - B)]]."""
    d = v.degree
    C = hop_matrix(v)
    Csi = np.linalg.inv(C.conj().T)
    Bm = band_matrix(v, w, thetas, alpha)
    E = np.asarray(E, dtype=complex).reshape(-1, 1, 1) if np.ndim(E) else complex(E)
    n = Bm.shape[0]
    out = np.zeros((n, 2 * d, 2 * d), dtype=complex)
    out[:, :d, d:] = np.eye(d)
    out[:, d:, :d] = -Csi @ C
    out[:, d:, d:] = Csi @ (E * np.eye(d) - Bm)
    return out
