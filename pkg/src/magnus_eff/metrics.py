"""Subspace fidelity, leakage and post-selected fidelity.

States of the relevant subspace are parametrized as
``psi(a, b) = cos(a/2) e_0 + exp(i b) sin(a/2) e_1`` with ``a in [0, pi]``,
``b in [0, 2 pi)``.  Every minimization scans a uniform 64 x 64 grid and then
polishes the best point (or a supplied warm start) with Nelder-Mead.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .errors import NumericalQualityError
from .linalg import as_state, as_unitary
from .propagation import PropagatorSeries, TimeSeries
from .tolerances import TOL

GRID_SIZE = 64
LEAK_EXCLUSION = 1e-12


@dataclass(frozen=True)
class RelevantSubspace:
    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=complex)
        if b.ndim != 2 or b.shape[1] != 2:
            raise ValueError("basis must be an (n, 2) array of column vectors")
        if np.max(np.abs(b.conj().T @ b - np.eye(2))) > 1e-12:
            raise ValueError("basis columns must be orthonormal")
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @classmethod
    def lowest_two(cls, dim: int = 3) -> "RelevantSubspace":
        return cls(np.eye(dim, dtype=complex)[:, :2])

    @property
    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.conj().T

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def embed(self, coeffs) -> np.ndarray:
        return self.basis @ np.asarray(coeffs, dtype=complex)

    def contains(self, psi, tol: float = 1e-12) -> bool:
        psi = np.asarray(psi, dtype=complex)
        return float(np.linalg.norm(psi - self.projector @ psi)) <= tol


@dataclass(frozen=True)
class Minimum:
    value: float
    a: float
    b: float
    grid_value: float

    @property
    def residual(self) -> float:
        return self.grid_value - self.value


@dataclass(frozen=True)
class FidelityReport:
    t: float
    F: float
    argmin_state: np.ndarray
    L_m: float
    F_prime_m: float
    F_prime: float | None
    minimizer_residual: float


def bloch_coeffs(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.stack([np.cos(a / 2) + 0j, np.exp(1j * b) * np.sin(a / 2)], axis=-1)


def bloch_angles(c) -> tuple[float, float]:
    """Inverse of :func:`bloch_coeffs` up to a global phase."""
    c = np.asarray(c, dtype=complex)
    c = c / np.linalg.norm(c)
    if abs(c[0]) > 0:
        c = c * np.conj(c[0]) / abs(c[0])
    a = 2 * math.atan2(abs(c[1]), c[0].real)
    b = float(np.angle(c[1])) % (2 * math.pi) if abs(c[1]) > 0 else 0.0
    return a, (0.0 if b >= 2 * math.pi else b)


def _grid_axes(n: int = GRID_SIZE) -> tuple[np.ndarray, np.ndarray]:
    return np.linspace(0.0, math.pi, n), np.arange(n) * (2 * math.pi / n)


def _quadratic_form(m: np.ndarray, c: np.ndarray) -> np.ndarray:
    return np.einsum("...i,ij,...j->...", c.conj(), m, c)


def _minimize(objective: Callable[[np.ndarray], np.ndarray], warm: tuple | None) -> Minimum:
    a_ax, b_ax = _grid_axes()
    aa, bb = np.meshgrid(a_ax, b_ax, indexing="ij")
    vals = objective(bloch_coeffs(aa, bb))
    idx = np.unravel_index(int(np.argmin(vals)), vals.shape)
    grid_value = float(vals[idx])
    starts = [(float(aa[idx]), float(bb[idx]))]
    if warm is not None:
        starts.append((float(warm[0]), float(warm[1])))

    def scalar(x):
        return float(objective(bloch_coeffs(x[0], x[1])))

    best = Minimum(grid_value, starts[0][0], starts[0][1], grid_value)
    for a0, b0 in starts:
        res = minimize(scalar, np.array([a0, b0]), method="Nelder-Mead",
                       options={"xatol": TOL.minimizer_xatol, "fatol": 1e-15, "maxiter": 4000,
                                "initial_simplex": [[a0, b0], [a0 + 0.05, b0], [a0, b0 + 0.05]]})
        if res.fun < best.value:
            best = Minimum(float(res.fun), float(res.x[0]), float(res.x[1]), grid_value)
    return best


def _check_pair(u, u_eff, sub: RelevantSubspace):
    u = as_unitary(u)
    u_eff = as_unitary(u_eff)
    if u.shape != u_eff.shape or u.shape[0] != sub.dim:
        raise ValueError(f"shape mismatch: U {u.shape}, U_eff {u_eff.shape}, subspace dim {sub.dim}")
    return u, u_eff


def _overlap_block(u, u_eff, sub: RelevantSubspace) -> np.ndarray:
    return sub.basis.conj().T @ u.conj().T @ u_eff @ sub.basis


PAULI = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex)


DEGENERATE_REL = 1e-9


def _pauli_split(m: np.ndarray) -> tuple[complex, np.ndarray]:
    """``m = m0 I + v . sigma`` for a 2x2 matrix."""
    return complex(np.trace(m) / 2), np.einsum("kij,ji->k", PAULI, m) / 2


def _bloch_vector(a: float, b: float) -> np.ndarray:
    return np.array([math.sin(a) * math.cos(b), math.sin(a) * math.sin(b), math.cos(a)])


def _from_bloch(n: np.ndarray, best: Minimum, value: float) -> Minimum:
    n = n / np.linalg.norm(n)
    a = math.acos(min(1.0, max(-1.0, float(n[2]))))
    b = math.atan2(float(n[1]), float(n[0])) % (2 * math.pi)
    return Minimum(value, a, 0.0 if b >= 2 * math.pi else b, best.grid_value)


def _newton_polish(m0, mv, best: Minimum) -> Minimum:
    # stationarity of n^T Q n + 2 c^T n on |n| = 1: (Q - lam) n = -c
    q = np.outer(mv.real, mv.real) + np.outer(mv.imag, mv.imag)
    c = (np.conj(m0) * mv).real
    n0 = _bloch_vector(best.a, best.b)
    n = n0.copy()
    lam = float(n @ q @ n + c @ n)
    for _ in range(20):
        g = np.concatenate([(q - lam * np.eye(3)) @ n + c, [(n @ n - 1) / 2]])
        jac = np.zeros((4, 4))
        jac[:3, :3] = q - lam * np.eye(3)
        jac[:3, 3] = -n
        jac[3, :3] = n
        try:
            step = np.linalg.solve(jac, -g)
        except np.linalg.LinAlgError:
            return best
        n, lam = n + step[:3], lam + step[3]
        if np.max(np.abs(step)) < 1e-15:
            break
    n = n / np.linalg.norm(n)
    v = float(abs(m0 + n @ mv) ** 2)
    if not v <= best.value + 1e-14 or float(np.linalg.norm(n - n0)) > 1e-4:
        return best
    return _from_bloch(n, best, min(v, best.value))


def _refine_quadratic(m: np.ndarray, keep: np.ndarray, best: Minimum) -> Minimum:
    """Pin the argmin of ``|<psi|M|psi>|^2`` beyond what a value-based search resolves.

    On the Bloch sphere ``<psi|M|psi> = m0 + n.v``.  If ``v`` is (numerically) a
    complex multiple of one real direction the minimizers form a circle, or the
    whole sphere when ``v = 0``; the state of least leakage, i.e. largest
    ``<psi|keep|psi>``, is taken from that set.  Otherwise the unique minimizer
    is polished by Newton iteration.
    """
    m0, mv = _pauli_split(m)
    scale = max(abs(m0), float(np.linalg.norm(mv)), 1e-300)
    k = _pauli_split(keep)[1].real
    sv = np.linalg.svd(np.stack([mv.real, mv.imag]), compute_uv=False)
    if sv[0] <= DEGENERATE_REL * scale:
        if np.linalg.norm(k) <= DEGENERATE_REL:
            # leakage flat as well: any state is a minimizer
            return best
        n = k / np.linalg.norm(k)
        return _from_bloch(n, best, min(float(abs(m0 + n @ mv) ** 2), best.value))
    if sv[1] > DEGENERATE_REL * scale:
        return _newton_polish(m0, mv, best)
    _, _, vt = np.linalg.svd(np.stack([mv.real, mv.imag]))
    e = vt[0]
    mu = complex(mv @ e)
    s = min(1.0, max(-1.0, -(np.conj(m0) * mu).real / abs(mu) ** 2))
    perp = k - (k @ e) * e
    if np.linalg.norm(perp) <= DEGENERATE_REL:
        # leakage flat on the circle: stay nearest the search result
        n0 = _bloch_vector(best.a, best.b)
        perp = n0 - (n0 @ e) * e
    if np.linalg.norm(perp) <= DEGENERATE_REL:
        perp = np.linalg.svd(e[None, :])[2][1]
    n = s * e + math.sqrt(max(0.0, 1 - s * s)) * perp / np.linalg.norm(perp)
    return _from_bloch(n, best, min(float(abs(m0 + s * mu) ** 2), best.value))


def _fidelity_min(u, u_eff, sub, warm) -> Minimum:
    m = _overlap_block(u, u_eff, sub)
    best = _minimize(lambda c: np.abs(_quadratic_form(m, c)) ** 2, warm)
    pu = sub.basis.conj().T @ u @ sub.basis
    return _refine_quadratic(m, pu.conj().T @ pu, best)


def subspace_fidelity(u, u_eff, sub: RelevantSubspace | None = None,
                      warm_start: tuple | None = None) -> tuple[float, np.ndarray]:
    """Worst-case ``|<psi|U^dagger U_eff|psi>|^2`` over relevant-subspace states."""
    sub = sub or RelevantSubspace.lowest_two(np.shape(u)[0])
    u, u_eff = _check_pair(u, u_eff, sub)
    best = _fidelity_min(u, u_eff, sub, warm_start)
    return best.value, sub.embed(bloch_coeffs(best.a, best.b))


def leakage(u, psi0, sub: RelevantSubspace | None = None) -> float:
    """Probability ``1 - ||P0 U psi0||^2`` of leaving the relevant subspace."""
    sub = sub or RelevantSubspace.lowest_two(np.shape(u)[0])
    psi0 = as_state(psi0)
    if not sub.contains(psi0):
        raise ValueError("initial state is not inside the relevant subspace")
    kept = sub.basis.conj().T @ (np.asarray(u) @ psi0)
    return float(min(max(1.0 - np.vdot(kept, kept).real, 0.0), 1.0))


def _postselect_min(u, u_eff, sub, warm) -> Minimum:
    m = _overlap_block(u, u_eff, sub)
    pu = sub.basis.conj().T @ u @ sub.basis

    def objective(c):
        kept = np.einsum("ij,...j->...i", pu, c)
        norm = np.sum(np.abs(kept) ** 2, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.abs(_quadratic_form(m, c)) ** 2 / norm
        return np.where(norm > LEAK_EXCLUSION, val, np.inf)

    a_ax, b_ax = _grid_axes()
    aa, bb = np.meshgrid(a_ax, b_ax, indexing="ij")
    grid_vals = objective(bloch_coeffs(aa, bb))
    if not np.any(np.isfinite(grid_vals)):
        raise NumericalQualityError("every probed state leaks completely; post-selected fidelity undefined")
    if not np.all(np.isfinite(grid_vals)):
        warnings.warn("fully leaking states excluded from the post-selected minimization", RuntimeWarning)
    return _minimize(objective, warm)


def postselect_fidelity(u, u_eff, sub: RelevantSubspace | None = None,
                        warm_start: tuple | None = None) -> tuple[float, np.ndarray]:
    """Worst-case fidelity after conditioning on staying in the relevant subspace.

    The objective is ``|<psi|U^dagger U_eff|psi>|^2 / (1 - L(psi))``, which is
    pointwise at least the plain fidelity, so ``F' >= F`` always holds.

    Raises
    ------
    NumericalQualityError
        Every probed state leaks completely.
    """
    sub = sub or RelevantSubspace.lowest_two(np.shape(u)[0])
    u, u_eff = _check_pair(u, u_eff, sub)
    best = _postselect_min(u, u_eff, sub, warm_start)
    return best.value, sub.embed(bloch_coeffs(best.a, best.b))


def fidelity_report(u, u_eff, sub: RelevantSubspace | None = None, t: float = 0.0,
                    exact_prime: bool = False, warm_start: tuple | None = None,
                    warm_start_prime: tuple | None = None) -> FidelityReport:
    """F, the leakage ``L_m`` of its argmin state and ``F'_m = F + L_m``."""
    sub = sub or RelevantSubspace.lowest_two(np.shape(u)[0])
    u, u_eff = _check_pair(u, u_eff, sub)
    best = _fidelity_min(u, u_eff, sub, warm_start)
    psi = sub.embed(bloch_coeffs(best.a, best.b))
    lm = leakage(u, psi, sub)
    fp = None
    if exact_prime:
        fp = _postselect_min(u, u_eff, sub, warm_start_prime).value
    return FidelityReport(t, best.value, psi, lm, best.value + lm, fp, best.residual)


def fidelity_reports(series: PropagatorSeries, series_eff: PropagatorSeries,
                     sub: RelevantSubspace | None = None, exact_prime: bool = False) -> list[FidelityReport]:
    """One report per grid point, each minimization warm-started from the previous argmin."""
    if series.grid != series_eff.grid:
        raise ValueError("propagator series are on different grids")
    sub = sub or RelevantSubspace.lowest_two(series.dim)
    reports = []
    warm = warm_p = None
    for t, u, ue in zip(series.grid.times, series.unitaries, series_eff.unitaries):
        r = fidelity_report(u, ue, sub, float(t), exact_prime, warm, warm_p)
        warm = bloch_angles(sub.basis.conj().T @ r.argmin_state)
        reports.append(r)
    return reports


def fidelity_timeseries(series: PropagatorSeries, series_eff: PropagatorSeries,
                        sub: RelevantSubspace | None = None, exact_prime: bool = False) -> TimeSeries:
    reports = fidelity_reports(series, series_eff, sub, exact_prime)
    channels = ["F", "L_m", "F_prime_m"] + (["F_prime"] if exact_prime else [])
    rows = [[r.F, r.L_m, r.F_prime_m] + ([r.F_prime] if exact_prime else []) for r in reports]
    return TimeSeries(series.grid, tuple(channels), np.array(rows))
