"""Dense complex linear algebra for small Hermitian problems.

Matrices are plain ``numpy`` complex arrays; the ``as_*`` helpers validate the
invariants a caller relies on and return a normalized copy.  The eigensolver is
a cyclic complex Jacobi iteration, which is robust and exact enough for the
n <= 8 problems handled here.  Exponentials of Hermitian generators are always
built from the eigendecomposition so that unitarity is structural.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import EigenConvergenceError
from .tolerances import TOL

MAX_JACOBI_SWEEPS = 60
SINC_SERIES_CUTOFF = 1e-4


def _as_square(m, name="matrix") -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def as_hermitian(m, rel_tol: float | None = None) -> np.ndarray:
    """Validate ``m`` as Hermitian within ``rel_tol`` (spectral norm) and return it.

    Raises
    ------
    ValueError
        Not square, non-finite, or ``||M - M^dagger|| > rel_tol * ||M||``.
    """
    a = _as_square(m, "Hermitian matrix")
    rel_tol = TOL.hermitian_rel if rel_tol is None else rel_tol
    diff = a - a.conj().T
    n = a.shape[0]
    dfro = np.linalg.norm(diff)
    mfro = np.linalg.norm(a)
    if dfro == 0.0 or dfro * math.sqrt(n) <= rel_tol * mfro:
        return a
    if spectral_norm(diff) > rel_tol * spectral_norm(a):
        raise ValueError(f"matrix is not Hermitian (anti-Hermitian part {dfro:.3e})")
    return a


def as_unitary(m, tol: float | None = None) -> np.ndarray:
    a = _as_square(m, "unitary matrix")
    tol = TOL.unitary if tol is None else tol
    err = unitarity_error(a)
    if err > tol:
        raise ValueError(f"matrix is not unitary (||U^dagger U - 1|| = {err:.3e})")
    return a


def as_state(psi, normalized: bool = True) -> np.ndarray:
    v = np.asarray(psi, dtype=complex).reshape(-1)
    if v.size < 1 or not np.all(np.isfinite(v)):
        raise ValueError("state vector must be non-empty and finite")
    if normalized and abs(np.linalg.norm(v) - 1.0) > TOL.state_norm:
        raise ValueError(f"state is not normalized (norm {np.linalg.norm(v):.15f})")
    return v


def unitarity_error(u) -> float:
    u = np.asarray(u, dtype=complex)
    return spectral_norm(u.conj().T @ u - np.eye(u.shape[0]))


def herm_eig(h) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition ``H = V diag(w) V^dagger`` by cyclic Jacobi rotations.

    Returns
    -------
    w : ndarray, real, ascending
    V : ndarray, unitary, columns are eigenvectors

    Raises
    ------
    EigenConvergenceError
        Off-diagonal mass still above threshold after ``MAX_JACOBI_SWEEPS``.
    """
    a = as_hermitian(h).copy()
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n), v
    stop = 1e-15 * scale
    skip = 1e-18 * scale
    off = 0.0
    for sweep in range(MAX_JACOBI_SWEEPS + 1):
        off = np.linalg.norm(a[~np.eye(n, dtype=bool)])
        if off <= stop:
            break
        if sweep == MAX_JACOBI_SWEEPS:
            raise EigenConvergenceError(sweep, off)
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                r = abs(apq)
                if r <= skip:
                    continue
                rotated = True
                phase = apq / r
                zeta = (a[q, q].real - a[p, p].real) / (2.0 * r)
                t = (1.0 if zeta >= 0 else -1.0) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                g = np.array([[c, s], [-np.conj(phase) * s, np.conj(phase) * c]])
                idx = [p, q]
                a[:, idx] = a[:, idx] @ g
                a[idx, :] = g.conj().T @ a[idx, :]
                a[p, q] = a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
                v[:, idx] = v[:, idx] @ g
        if not rotated:
            break
    w = np.diag(a).real.copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def expm_hermitian(h, t: float) -> np.ndarray:
    """``exp(-i H t)`` for Hermitian ``H`` via its eigendecomposition."""
    h = as_hermitian(h)
    if not math.isfinite(t):
        raise ValueError("time must be finite")
    if t == 0:
        return np.eye(h.shape[0], dtype=complex)
    w, v = herm_eig(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def spectral_norm(m) -> float:
    """Largest singular value, from the top eigenvalue of ``M^dagger M``."""
    a = _as_square(m)
    g = a.conj().T @ a
    g = 0.5 * (g + g.conj().T)
    if not np.any(g):
        return 0.0
    w, _ = herm_eig(g)
    return math.sqrt(max(w[-1], 0.0))


def commutator(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"commutator needs equal square shapes, got {a.shape} and {b.shape}")
    return a @ b - b @ a


def sinc(x):
    """Unnormalized ``sin(x)/x``; Taylor series below ``SINC_SERIES_CUTOFF``."""
    xa = np.asarray(x, dtype=float)
    small = np.abs(xa) < SINC_SERIES_CUTOFF
    x2 = xa * xa
    series = 1.0 - x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = np.sin(xa) / np.where(small, 1.0, xa)
    out = np.where(small, series, direct)
    return float(out) if out.ndim == 0 else out
