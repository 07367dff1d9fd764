"""Exact and sliced-product propagators and the histories derived from them."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import RegimeError
from .lambda_model import LambdaParams, ae_effective
from .linalg import as_hermitian, as_state, expm_hermitian, herm_eig, unitarity_error
from .tolerances import TOL


class Method(str, enum.Enum):
    EXACT = "Exact"
    AE = "AE"
    ME2 = "ME2"
    ME24 = "ME24"
    ME234 = "ME234"


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    n_points: int

    def __post_init__(self):
        if not (math.isfinite(self.t_start) and math.isfinite(self.t_end)):
            raise ValueError("grid endpoints must be finite")
        if not self.t_end > self.t_start:
            raise ValueError(f"t_end ({self.t_end}) must exceed t_start ({self.t_start})")
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValueError(f"n_points must be an integer >= 2, got {self.n_points}")
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.n_points)

    @property
    def spacing(self) -> float:
        return (self.t_end - self.t_start) / (self.n_points - 1)


@dataclass(frozen=True)
class PropagatorSeries:
    grid: TimeGrid
    unitaries: np.ndarray
    label: str = "Exact"

    def __post_init__(self):
        u = np.asarray(self.unitaries, dtype=complex)
        if u.ndim != 3 or u.shape[0] != self.grid.n_points or u.shape[1] != u.shape[2]:
            raise ValueError(f"unitaries shape {u.shape} does not match grid of {self.grid.n_points} points")
        if np.max(np.abs(u[0] - np.eye(u.shape[1]))) > TOL.unitary:
            raise ValueError("series must start at the identity")
        worst = max_unitarity_error(u)
        if worst > TOL.unitary:
            raise ValueError(f"series element not unitary (error {worst:.3e})")
        u.setflags(write=False)
        object.__setattr__(self, "unitaries", u)

    @property
    def dim(self) -> int:
        return self.unitaries.shape[1]

    def __len__(self) -> int:
        return self.grid.n_points


@dataclass(frozen=True)
class TimeSeries:
    grid: TimeGrid
    channels: tuple
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_points, len(self.channels)):
            raise ValueError(f"values shape {v.shape} does not match grid and {len(self.channels)} channels")
        v.setflags(write=False)
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "values", v)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[:, self.channels.index(name)]


def max_unitarity_error(unitaries: np.ndarray) -> float:
    u = np.asarray(unitaries)
    eye = np.eye(u.shape[-1])
    gram = np.einsum("nji,njk->nik", u.conj(), u) - eye
    # Frobenius bounds the spectral norm; refine only if the bound is loose
    fro = np.sqrt(np.sum(np.abs(gram) ** 2, axis=(1, 2)))
    worst = int(np.argmax(fro))
    if fro[worst] <= TOL.unitary:
        return float(fro[worst])
    return unitarity_error(u[worst])


def propagate_static(h, grid: TimeGrid, label: str = "Exact") -> PropagatorSeries:
    """``exp(-i H (t_n - t_start))`` for every grid time from one eigendecomposition."""
    h = as_hermitian(h)
    w, v = herm_eig(h)
    dt = grid.times - grid.t_start
    phases = np.exp(-1j * np.outer(dt, w))
    u = np.einsum("ij,nj,kj->nik", v, phases, v.conj())
    u[0] = np.eye(h.shape[0])
    return PropagatorSeries(grid, u, label)


def slices_per_step(grid: TimeGrid, tau: float) -> int:
    """Whole number of slices between grid points; raises if incommensurate."""
    if not (tau > 0 and math.isfinite(tau)):
        raise ValueError(f"tau must be positive, got {tau}")
    ratio = grid.spacing / tau
    m = round(ratio)
    if m < 1 or abs(ratio - m) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"grid spacing {grid.spacing!r} is not a whole number of slices of width {tau!r} "
                         f"(remainder {grid.spacing - m * tau:.3e})")
    return int(m)


def propagate_sliced(h_eff_at: Callable[[float], np.ndarray], grid: TimeGrid, tau: float,
                     label: str = "ME2") -> PropagatorSeries:
    """Ordered product of per-slice exponentials ``exp(-i H_eff(t_j) tau)``.

    ``h_eff_at`` is evaluated at slice centers.  Slice exponentials are cached
    on the matrix bytes, so time-independent generators cost one
    diagonalization.
    """
    m = slices_per_step(grid, tau)
    dim = np.asarray(h_eff_at(grid.t_start + 0.5 * tau)).shape[0]
    out = np.empty((grid.n_points, dim, dim), dtype=complex)
    out[0] = np.eye(dim)
    cache: dict[bytes, np.ndarray] = {}
    u = np.eye(dim, dtype=complex)
    j = 0
    for n in range(1, grid.n_points):
        for _ in range(m):
            h = np.ascontiguousarray(h_eff_at(grid.t_start + (j + 0.5) * tau), dtype=complex)
            key = h.tobytes()
            step = cache.get(key)
            if step is None:
                step = expm_hermitian(h, tau)
                if len(cache) < 4096:
                    cache[key] = step
            u = step @ u
            j += 1
        out[n] = u
    return PropagatorSeries(grid, out, label)


def probe_states(p: LambdaParams) -> tuple[np.ndarray, np.ndarray]:
    """Relevant-subspace state orthogonal, on the Bloch sphere, to the AE generator.

    The traceless AE block is ``(b_x sigma_x + b_y sigma_y + b_z sigma_z)`` with
    ``sigma_z = |1><1| - |0><0|``; its polar angle is
    ``theta = atan2(|Omega~|, delta + S_1 - S_0)`` and the probe uses
    ``theta' = theta + pi/2`` with real amplitudes.

    Raises
    ------
    RegimeError
        The AE block is proportional to the identity.
    """
    c = ae_effective(p.with_(eta=0.0))
    bz = p.delta + c.S1 - c.S0
    bt = abs(c.Omega_tilde)
    scale = max(abs(p.delta), abs(c.S0), abs(c.S1), bt, 1e-300)
    if math.hypot(bz, bt) <= 1e-14 * scale or (bz == 0 and bt == 0):
        raise RegimeError("AE block is proportional to the identity; probe angle undefined",
                          {"bz": bz, "coupling": bt})
    theta = math.atan2(bt, bz)
    tp = theta + 0.5 * math.pi
    psi0 = np.array([math.cos(tp / 2), math.sin(tp / 2), 0.0], dtype=complex)
    psi1 = np.array([-math.sin(tp / 2), math.cos(tp / 2), 0.0], dtype=complex)
    return psi0, psi1


def population_histories(series: PropagatorSeries, psi0, targets: Sequence,
                         names: Sequence[str] | None = None) -> TimeSeries:
    """``|<target|U(t)|psi0>|^2`` per target and grid point."""
    psi0 = as_state(psi0)
    if psi0.size != series.dim:
        raise ValueError(f"state dimension {psi0.size} does not match propagator dimension {series.dim}")
    tg = np.array([as_state(t) for t in targets])
    if tg.ndim != 2 or tg.shape[1] != series.dim:
        raise ValueError("target dimensions must match the propagator")
    names = tuple(names) if names is not None else tuple(f"pop_{i}" for i in range(len(tg)))
    if len(names) != len(tg):
        raise ValueError("one name per target required")
    evolved = series.unitaries @ psi0
    amps = evolved @ tg.conj().T
    return TimeSeries(series.grid, names, np.abs(amps) ** 2)
