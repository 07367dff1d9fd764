"""Closed-form physics of the driven three-level Lambda system.

Levels |0>, |1> form the relevant doublet (split by ``delta``), |2> is the
far-detuned excited state at ``Delta``.  The lab-frame Hamiltonian is

    H = -delta/2 |0><0| + delta/2 |1><1| + Delta |2><2|
        + 1/2 sum_k (Omega_k^* |k><2| + h.c.) + eta * 1

Everything here is a pure function of :class:`LambdaParams`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import RegimeError
from .linalg import herm_eig, sinc
from .magnus import OscillatoryHamiltonian, TimeSlice, convergence_margin

DIM = 3


class Order(str, enum.Enum):
    AE = "AE"
    ME2_FINITE_TAU = "ME2_finite_tau"
    ME2_COARSE = "ME2_coarse"
    ME4 = "ME4"


class Frame(str, enum.Enum):
    LAB = "lab"
    INTERACTION = "interaction"


@dataclass(frozen=True)
class LambdaParams:
    delta: float
    Delta: float
    Omega0: complex
    Omega1: complex
    eta: float = 0.0

    def __post_init__(self):
        for name in ("delta", "Delta", "eta"):
            v = getattr(self, name)
            if isinstance(v, complex) or not math.isfinite(float(v)):
                raise ValueError(f"{name} must be a finite real number, got {v!r}")
            object.__setattr__(self, name, float(v))
        for name in ("Omega0", "Omega1"):
            v = complex(getattr(self, name))
            if not (math.isfinite(v.real) and math.isfinite(v.imag)):
                raise ValueError(f"{name} must be finite, got {v!r}")
            object.__setattr__(self, name, v)
        if self.Delta == 0:
            raise ValueError("Delta must be nonzero")
        if not abs(self.Delta) > abs(self.delta) / 2:
            raise ValueError(f"need |Delta| > |delta|/2 (Delta={self.Delta}, delta={self.delta})")

    @property
    def omega0(self) -> float:
        """Frequency of the |0> <-> |2> transition, ``Delta + delta/2``."""
        return self.Delta + 0.5 * self.delta

    @property
    def omega1(self) -> float:
        return self.Delta - 0.5 * self.delta

    @property
    def x(self) -> float:
        return (abs(self.Omega0) ** 2 + abs(self.Omega1) ** 2) / (4.0 * self.Delta**2)

    def with_(self, **changes) -> "LambdaParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class EffCoefficients:
    """Stark shifts and effective coupling of the relevant doublet.

    ``S2`` is the shift of |2> excluding ``Delta``, so the lab-frame entry is
    ``Delta + S2``.
    """

    S0: float
    S1: float
    Omega_tilde: complex
    S2: float
    order: Order
    tau_used: float | None = None


@dataclass(frozen=True)
class EffHamiltonianSpec:
    """Which effective Hamiltonian to build.

    ``tau=None`` selects the coarse-grained limit; a number selects the
    finite-slice coefficients.
    """

    orders: frozenset = frozenset({2})
    tau: float | None = None
    frame: Frame = Frame.LAB

    def __post_init__(self):
        orders = frozenset(int(o) for o in self.orders)
        if not orders or not orders <= {2, 3, 4} or 2 not in orders:
            raise ValueError(f"orders must contain 2 and be a subset of {{2,3,4}}, got {sorted(orders)}")
        object.__setattr__(self, "orders", orders)
        object.__setattr__(self, "frame", Frame(self.frame))
        if self.tau is not None and not (self.tau > 0 and math.isfinite(self.tau)):
            raise ValueError(f"tau must be positive, got {self.tau}")

    @property
    def coarse(self) -> bool:
        return self.tau is None


def _unit(i: int, j: int) -> np.ndarray:
    m = np.zeros((DIM, DIM), dtype=complex)
    m[i, j] = 1.0
    return m


def hamiltonian_lab(p: LambdaParams) -> np.ndarray:
    h = np.diag([-0.5 * p.delta, 0.5 * p.delta, p.Delta]).astype(complex)
    for k, om in enumerate((p.Omega0, p.Omega1)):
        h[k, 2] = np.conj(om) / 2
        h[2, k] = om / 2
    return h + p.eta * np.eye(DIM)


def free_hamiltonian(p: LambdaParams) -> np.ndarray:
    """Diagonal part defining the interaction picture, including ``eta``."""
    return np.diag([-0.5 * p.delta + p.eta, 0.5 * p.delta + p.eta, p.Delta + p.eta]).astype(complex)


def hamiltonian_interaction(p: LambdaParams) -> OscillatoryHamiltonian:
    """``U0^dagger (H - H0) U0`` as conjugate-pair oscillatory terms."""
    terms = []
    for k, (om, w) in enumerate(((p.Omega0, p.omega0), (p.Omega1, p.omega1))):
        if om == 0:
            continue
        terms.append((np.conj(om) / 2 * _unit(k, 2), -w))
        terms.append((om / 2 * _unit(2, k), w))
    return OscillatoryHamiltonian(tuple(terms), dim=DIM)


def to_interaction_frame(h_lab: np.ndarray, p: LambdaParams, t: float) -> np.ndarray:
    """``U0(t)^dagger (H - H0) U0(t)`` for a static lab-frame operator."""
    e = np.diag(free_hamiltonian(p)).real
    phase = np.exp(1j * np.subtract.outer(e, e) * t)
    return (h_lab - free_hamiltonian(p)) * phase


def ae_effective(p: LambdaParams) -> EffCoefficients:
    """Adiabatic elimination (``dc_2/dt = 0``) applied to ``H`` including ``eta``.

    Setting the excited amplitude stationary in the shifted system gives
    ``c_2 = -(Omega_0 c_0 + Omega_1 c_1) / (2 (Delta + eta))``, so the gauge
    shift leaks into every coefficient.  With ``eta = 0`` these are the
    textbook values.
    """
    d = p.Delta + p.eta
    if d == 0:
        raise RegimeError("adiabatic elimination undefined for Delta + eta = 0", {"Delta_plus_eta": 0.0})
    s0 = -abs(p.Omega0) ** 2 / (4 * d)
    s1 = -abs(p.Omega1) ** 2 / (4 * d)
    om = -p.Omega0 * np.conj(p.Omega1) / (2 * d)
    return EffCoefficients(s0, s1, complex(om), 0.0, Order.AE)


def ae_lab_hamiltonian(p: LambdaParams) -> np.ndarray:
    """AE block embedded in 3x3; |2> is left at ``Delta + eta`` and decoupled."""
    c = ae_effective(p)
    h = np.diag([-0.5 * p.delta + c.S0, 0.5 * p.delta + c.S1, p.Delta]).astype(complex)
    h[1, 0] = c.Omega_tilde / 2
    h[0, 1] = np.conj(c.Omega_tilde) / 2
    return h + p.eta * np.eye(DIM)


def me2_coefficients(p: LambdaParams, tau: float) -> EffCoefficients:
    """Second-order coefficients of a centered slice of width ``tau`` at t = 0.

    ``S_k = -|Omega_k|^2 / (4 w_k) (1 - sinc(w_k tau))`` with
    ``w_0 = Delta + delta/2``, ``w_1 = Delta - delta/2``; the coupling keeps
    the fast-oscillating remainders, which makes it complex at finite ``tau``.
    Its ``sinc(delta tau/2)`` part carries ``Delta / (Delta^2 - delta^2/4)``.
    """
    if not (tau > 0 and math.isfinite(tau)):
        raise ValueError(f"tau must be positive, got {tau}")
    w0, w1, d = p.omega0, p.omega1, p.delta
    s0 = -abs(p.Omega0) ** 2 / (4 * w0) * (1 - sinc(w0 * tau))
    s1 = -abs(p.Omega1) ** 2 / (4 * w1) * (1 - sinc(w1 * tau))
    slow = sinc(d * tau / 2)
    bracket = ((slow - np.exp(-0.5j * w0 * tau) * sinc(w1 * tau / 2)) / w0
               + (slow - np.exp(0.5j * w1 * tau) * sinc(w0 * tau / 2)) / w1)
    om = -p.Omega0 * np.conj(p.Omega1) / 4 * bracket
    return EffCoefficients(float(s0), float(s1), complex(om), float(-s0 - s1), Order.ME2_FINITE_TAU, float(tau))


def me2_coarse(p: LambdaParams) -> EffCoefficients:
    s0 = -abs(p.Omega0) ** 2 / (4 * p.omega0)
    s1 = -abs(p.Omega1) ** 2 / (4 * p.omega1)
    om = -p.Omega0 * np.conj(p.Omega1) / 2 * p.Delta / (p.Delta**2 - p.delta**2 / 4)
    return EffCoefficients(s0, s1, complex(om), -s0 - s1, Order.ME2_COARSE)


def alpha(Delta: float, tau: float | None) -> float:
    if tau is None:
        return 1.0
    z = Delta * tau / 2
    return 1.0 + sinc(z) * (1.0 - 8.0 * math.cos(z)) / 3.0


def beta(Delta: float, tau: float | None) -> float:
    if tau is None:
        return 1.0
    z = Delta * tau / 2
    return 1.0 - 2.0 / 3.0 * math.cos(z) * sinc(z) - math.cos(2 * z) * sinc(2 * z) / 3.0


def _require_delta0(p: LambdaParams, what: str):
    if p.delta != 0:
        raise RegimeError(f"{what} is only available for delta = 0", {"delta": p.delta})


def me3_term(p: LambdaParams, tau: float | None = None) -> np.ndarray:
    """Third-order lab-frame correction; couples the doublet to |2> only."""
    _require_delta0(p, "the third-order term")
    a = alpha(p.Delta, tau) * p.x
    m = np.zeros((DIM, DIM), dtype=complex)
    for k, om in enumerate((p.Omega0, p.Omega1)):
        m[2, k] = a * om / 2
        m[k, 2] = np.conj(m[2, k])
    return m


@dataclass(frozen=True)
class FourthOrderCoefficients:
    S0: float
    S1: float
    Omega_tilde: complex
    beta: float


def me4_coefficients(p: LambdaParams, tau: float | None = None) -> FourthOrderCoefficients:
    _require_delta0(p, "the fourth-order term")
    x = p.x
    return FourthOrderCoefficients(
        x * abs(p.Omega0) ** 2 / (4 * p.Delta),
        x * abs(p.Omega1) ** 2 / (4 * p.Delta),
        complex(x * p.Omega0 * np.conj(p.Omega1) / (2 * p.Delta)),
        beta(p.Delta, tau),
    )


def me4_term(p: LambdaParams, tau: float | None = None) -> np.ndarray:
    """Fourth-order correction; block diagonal, traceless."""
    c = me4_coefficients(p, tau)
    m = np.diag([c.S0, c.S1, -(c.S0 + c.S1)]).astype(complex)
    m[1, 0] = c.Omega_tilde / 2
    m[0, 1] = np.conj(c.Omega_tilde) / 2
    return c.beta * m


def effective_lab_hamiltonian(p: LambdaParams, spec: EffHamiltonianSpec | None = None) -> np.ndarray:
    """Magnus effective Hamiltonian in the lab frame.

    Raises
    ------
    RegimeError
        Orders 3 or 4 requested with ``delta != 0``.
    """
    spec = spec or EffHamiltonianSpec()
    c = me2_coarse(p) if spec.coarse else me2_coefficients(p, spec.tau)
    h = np.diag([-0.5 * p.delta + c.S0, 0.5 * p.delta + c.S1, p.Delta + c.S2]).astype(complex)
    h[1, 0] = c.Omega_tilde / 2
    h[0, 1] = np.conj(c.Omega_tilde) / 2
    if 3 in spec.orders:
        h = h + me3_term(p, spec.tau)
    if 4 in spec.orders:
        h = h + me4_term(p, spec.tau)
    h = h + p.eta * np.eye(DIM)
    if spec.frame is Frame.INTERACTION:
        return to_interaction_frame(h, p, 0.0)
    return h


def effective_interaction_hamiltonian(p: LambdaParams, spec: EffHamiltonianSpec, t: float) -> np.ndarray:
    """Lab-frame effective Hamiltonian moved to the interaction picture at time ``t``."""
    lab = effective_lab_hamiltonian(p, replace(spec, frame=Frame.LAB))
    return to_interaction_frame(lab, p, t)


def exact_splittings_delta0(p: LambdaParams) -> tuple[float, float]:
    _require_delta0(p, "the closed-form splitting")
    r = math.sqrt(1.0 + 4.0 * p.x)
    return 0.5 * p.Delta * (r - 1.0), 0.5 * p.Delta * (r + 1.0)


def numeric_splittings(h: np.ndarray) -> tuple[float, float]:
    """Adjacent eigenvalue gaps of a 3x3 Hermitian matrix, ascending order."""
    w, _ = herm_eig(h)
    return float(w[1] - w[0]), float(w[2] - w[1])


def relevant_splitting(h: np.ndarray) -> float:
    """Eigenvalue gap of the 2x2 relevant block."""
    w, _ = herm_eig(h[:2, :2])
    return float(w[1] - w[0])


@dataclass(frozen=True)
class TauDiagnostics:
    tau: float
    ratio_fast: float
    ratio_slow: float
    convergence_margin: float
    fast_ok: bool
    slow_ok: bool
    convergence_ok: bool
    fast_periods: int = field(default=0)

    def as_dict(self) -> dict:
        return {
            "tau": self.tau,
            "ratio_fast": self.ratio_fast,
            "ratio_slow": self.ratio_slow,
            "convergence_margin": self.convergence_margin,
            "fast_ok": self.fast_ok,
            "slow_ok": self.slow_ok,
            "convergence_ok": self.convergence_ok,
            "fast_periods_per_slice": self.fast_periods,
        }


MIN_FAST_RATIO = 3.0
MAX_SLOW_RATIO = 1.0 / 3.0


def _diagnose(p: LambdaParams, tau: float, k: int, slow_rate: float) -> TauDiagnostics:
    ratio_fast = tau * abs(p.Delta) / (2 * math.pi)
    ratio_slow = tau * slow_rate / (2 * math.pi)
    margin = convergence_margin(hamiltonian_interaction(p), TimeSlice(0.0, tau))
    return TauDiagnostics(tau, ratio_fast, ratio_slow, margin,
                          ratio_fast >= MIN_FAST_RATIO - 1e-12, ratio_slow <= MAX_SLOW_RATIO + 1e-12,
                          margin > 0, k)


def tau_diagnostics(p: LambdaParams, tau: float) -> TauDiagnostics:
    slow = max(abs(p.delta), abs(me2_coarse(p).Omega_tilde))
    return _diagnose(p, tau, int(round(tau * abs(p.Delta) / (2 * math.pi))), slow)


def select_tau(p: LambdaParams, strict: bool = True) -> tuple[float, TauDiagnostics]:
    """Coarse-graining time between the fast and slow scales.

    Geometric mean of ``2 pi/|Delta|`` and ``2 pi/max(|delta|, |Omega~|)``,
    snapped to a whole number of fast periods so that ``alpha = beta = 1``.
    When the snapped value misses the separation bounds, the nearest admissible
    multiple is used if one exists.

    Raises
    ------
    RegimeError
        No multiple of the fast period satisfies both separation ratios.
    """
    fast = 2 * math.pi / abs(p.Delta)
    slow_rate = max(abs(p.delta), abs(me2_coarse(p).Omega_tilde), 1e-6 * abs(p.Delta))
    tau0 = math.sqrt(fast * 2 * math.pi / slow_rate)
    k = max(1, int(round(tau0 / fast)))
    k_max = math.floor(MAX_SLOW_RATIO * abs(p.Delta) / slow_rate + 1e-12)
    k_min = math.ceil(MIN_FAST_RATIO - 1e-12)
    if k_min <= k_max:
        k = min(max(k, k_min), k_max)
    diag = _diagnose(p, k * fast, k, slow_rate)
    if strict and not (diag.fast_ok and diag.slow_ok):
        raise RegimeError(
            f"no coarse-graining time separates the scales: ratio_fast={diag.ratio_fast:.4g} "
            f"(need >= {MIN_FAST_RATIO:g}), ratio_slow={diag.ratio_slow:.4g} (need <= {MAX_SLOW_RATIO:.4g})",
            diag.as_dict(),
        )
    return diag.tau, diag


def raman_period(p: LambdaParams) -> float:
    """Period of the exact |0> <-> |1> population oscillation at delta = 0."""
    eps10, _ = exact_splittings_delta0(p)
    return 2 * math.pi / eps10
