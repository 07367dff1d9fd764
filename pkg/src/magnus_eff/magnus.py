"""Magnus expansion over time slices.

Two independent routes produce the Magnus terms F_1..F_4 of a slice:

* :func:`magnus_closed_form` expands ``H(t) = sum_k M_k exp(i w_k t)`` into
  frequency tuples and evaluates every time-ordered exponential integral in
  closed form (:func:`ordered_integral`).
* :func:`magnus_numeric` integrates the sampled Hamiltonian over the ordered
  simplex with nested Gauss-Legendre quadrature and never looks at the
  frequencies except to pick a starting panel count.

Both build the ordered tensor ``T = int_{s_1>...>s_n} H(s_1) (x) ... (x) H(s_n)``
and contract it with the same commutator algebra, so agreement between them
checks the integrals, not the algebra.  Convention: ``U = exp(-i sum_i F_i)``.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import NumericalQualityError, QuadratureError
from .linalg import as_hermitian, spectral_norm
from .quadrature import DEFAULT_NODES, PanelGrid, cumulative, integrate
from .tolerances import TOL

# Divided differences whose nodes lie within this distance (in units of
# omega * tau) are summed as a Taylor series instead of by subtraction.
CLUSTER_RADIUS = 0.5
SERIES_TERMS = 40
MAX_PANELS = 4096


class SliceMode(str, enum.Enum):
    CENTERED = "centered"
    FORWARD = "forward"


@dataclass(frozen=True)
class TimeSlice:
    """One coarse-graining interval.

    ``center`` is the label time t_j.  Centered slices cover
    ``[t_j - tau/2, t_j + tau/2]``; forward slices cover ``[t_j, t_j + tau]``.
    """

    center: float
    width: float
    mode: SliceMode = SliceMode.CENTERED

    def __post_init__(self):
        if not (self.width > 0 and math.isfinite(self.width)):
            raise ValueError(f"slice width must be positive and finite, got {self.width}")
        object.__setattr__(self, "mode", SliceMode(self.mode))

    @property
    def start(self) -> float:
        if self.mode is SliceMode.CENTERED:
            return self.center - 0.5 * self.width
        return self.center

    @property
    def end(self) -> float:
        return self.start + self.width


@dataclass(frozen=True)
class OscillatoryHamiltonian:
    """``H(t) = sum_k M_k exp(i w_k t)``; Hermiticity needs conjugate-pair terms."""

    terms: tuple = ()
    dim: int = 0

    def __post_init__(self):
        terms = tuple((np.array(m, dtype=complex), float(w)) for m, w in self.terms)
        dim = self.dim or (terms[0][0].shape[0] if terms else 0)
        if dim < 1:
            raise ValueError("dimension required for an empty Hamiltonian")
        for m, w in terms:
            if m.shape != (dim, dim):
                raise ValueError(f"term shape {m.shape} does not match dim {dim}")
            if not math.isfinite(w):
                raise ValueError("frequencies must be finite")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "dim", dim)
        probe = np.random.default_rng(0).uniform(-10.0, 10.0)
        for t in (0.0, probe):
            h = self(t)
            try:
                as_hermitian(h, rel_tol=1e-10)
            except ValueError as exc:
                raise ValueError(f"oscillatory Hamiltonian is not Hermitian at t={t}") from exc

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape + (self.dim, self.dim), dtype=complex)
        for m, w in self.terms:
            out = out + np.exp(1j * w * t)[..., None, None] * m
        return out

    @property
    def max_frequency(self) -> float:
        return max((abs(w) for _, w in self.terms), default=0.0)

    @property
    def norm_bound(self) -> float:
        return sum(spectral_norm(m) for m, _ in self.terms)


@dataclass(frozen=True)
class MagnusTerms:
    F: tuple
    slice: TimeSlice

    @property
    def max_order(self) -> int:
        return len(self.F)


# ---------------------------------------------------------------------------
# time-ordered exponential integrals


def _divided_difference_exp(z: Sequence[complex]) -> complex:
    """``exp[z_0, ..., z_n]`` with clustered nodes handled by series."""
    z = [complex(v) for v in z]
    memo: dict[tuple, complex] = {}

    def rec(idx: tuple) -> complex:
        if idx in memo:
            return memo[idx]
        pts = [z[i] for i in idx]
        if len(pts) == 1:
            val = complex(np.exp(pts[0]))
        else:
            pairs = [(abs(z[i] - z[j]), i, j) for i, j in itertools.combinations(idx, 2)]
            spread, i, j = max(pairs)
            if spread < CLUSTER_RADIUS:
                val = _clustered(pts)
            else:
                without_i = tuple(k for k in idx if k != i)
                without_j = tuple(k for k in idx if k != j)
                val = (rec(without_i) - rec(without_j)) / (z[j] - z[i])
        memo[idx] = val
        return val

    return rec(tuple(range(len(z))))


def _clustered(pts: list[complex]) -> complex:
    # exp[z_0..z_k] = e^c sum_m h_m(z - c) / (m + k)!, h_m complete homogeneous
    c = sum(pts) / len(pts)
    k = len(pts) - 1
    h = np.zeros(SERIES_TERMS + 1, dtype=complex)
    h[0] = 1.0
    for p in pts:
        d = p - c
        for m in range(1, SERIES_TERMS + 1):
            h[m] += d * h[m - 1]
    total = sum(h[m] / math.factorial(m + k) for m in range(SERIES_TERMS + 1))
    return complex(np.exp(c) * total)


@lru_cache(maxsize=65536)
def _ordered_integral_cached(omegas: tuple, tau: float) -> complex:
    n = len(omegas)
    # exponent sum_j w_j s_j = sum_m Lambda_m (s_m - s_{m-1}) with suffix sums Lambda_m
    suffix = [math.fsum(omegas[m:]) for m in range(n)]
    nodes = [1j * tau * lam for lam in suffix] + [0.0]
    return tau**n * _divided_difference_exp(nodes)


def ordered_integral(omegas: Sequence[float], tau: float) -> complex:
    """``int_0^tau ds_n ... int_0^{s_2} ds_1 exp(i sum_j w_j s_j)``.

    ``omegas[0]`` belongs to the innermost (earliest) variable.  The value is
    the divided difference of ``exp`` over the nodes ``i tau Omega_k`` built
    from partial frequency sums, which is the all-orders recursion with its
    resonant denominators replaced by their limits.
    """
    omegas = tuple(float(w) for w in omegas)
    if not omegas:
        raise ValueError("need at least one frequency")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    return _ordered_integral_cached(omegas, float(tau))


def ordered_integral_generic(omegas: Sequence[float], tau: float) -> complex:
    """Same integral by the plain partial-fraction recursion (no resonance handling).

    Raises ``ZeroDivisionError`` when a partial frequency sum is resonant; kept
    as a cross-check of :func:`ordered_integral` away from resonances.
    """
    scale = max(1.0, sum(abs(w) for w in omegas))
    coeffs = {0.0: 1.0 + 0j}
    for w in omegas:
        new: dict[float, complex] = {}
        for lam, c in coeffs.items():
            freq = lam + w
            if abs(freq) < TOL.resonance_rel * scale:
                raise ZeroDivisionError(f"resonant partial sum {freq}")
            a = c / (1j * freq)
            new[freq] = new.get(freq, 0) + a
            new[0.0] = new.get(0.0, 0) - a
        coeffs = new
    return complex(sum(c * np.exp(1j * lam * tau) for lam, c in coeffs.items()))


def slice_phase(omegas: Sequence[float], sl: TimeSlice) -> complex:
    """Phase ``exp(i sum w_j t_start)`` moving an ordered integral onto the slice."""
    total = math.fsum(float(w) for w in omegas)
    return complex(np.exp(1j * total * sl.start))


# ---------------------------------------------------------------------------
# commutator algebra

# Leaves are time labels 1..n, label 1 being the latest time.
_EXPRESSIONS = {
    1: (1.0 + 0j, [1]),
    2: (-0.5j, [(1, 2)]),
    3: (-1.0 / 6.0 + 0j, [(1, (2, 3)), ((1, 2), 3)]),
    4: (1j / 12.0, [(((1, 2), 3), 4), (1, ((2, 3), 4)), (1, (2, (3, 4))), (2, (3, (4, 1)))]),
}


def _expand(expr) -> list[tuple[int, tuple]]:
    if isinstance(expr, int):
        return [(1, (expr,))]
    left, right = expr
    out = []
    for cl, pl in _expand(left):
        for cr, pr in _expand(right):
            out.append((cl * cr, pl + pr))
            out.append((-cl * cr, pr + pl))
    return out


@lru_cache(maxsize=None)
def product_expansion(order: int) -> tuple[complex, tuple]:
    """Prefactor and signed product orderings of the order-``order`` integrand."""
    if order not in _EXPRESSIONS:
        raise ValueError(f"Magnus order must be 1..4, got {order}")
    pref, exprs = _EXPRESSIONS[order]
    coeffs: dict[tuple, int] = {}
    for e in exprs:
        for c, perm in _expand(e):
            coeffs[perm] = coeffs.get(perm, 0) + c
    return pref, tuple((perm, c) for perm, c in sorted(coeffs.items()) if c != 0)


def contract_ordered_tensor(tensor: np.ndarray, order: int) -> np.ndarray:
    """Apply the order-``order`` commutator algebra to an ordered tensor."""
    letters = "abcdefghijklmnop"
    pref, perms = product_expansion(order)
    n = int(round(tensor.size ** (1.0 / (2 * order))))
    t = tensor.reshape((n,) * (2 * order))
    out = np.zeros((n, n), dtype=complex)
    for perm, c in perms:
        sub = [""] * (2 * order)
        chain = ["y"] + [letters[k] for k in range(order - 1)] + ["z"]
        for pos, label in enumerate(perm):
            sub[2 * (label - 1)] = chain[pos]
            sub[2 * (label - 1) + 1] = chain[pos + 1]
        out += c * np.einsum("".join(sub) + "->yz", t)
    return pref * out


# ---------------------------------------------------------------------------
# ordered tensors


def _tensor_closed_form(h: OscillatoryHamiltonian, sl: TimeSlice, order: int) -> np.ndarray:
    n = h.dim
    tensor = np.zeros((n * n,) * order, dtype=complex)
    flat = [m.reshape(-1) for m, _ in h.terms]
    for tup in itertools.product(range(len(h.terms)), repeat=order):
        oms = [h.terms[k][1] for k in tup]
        # tup[0] sits at the latest time; ordered_integral wants earliest first
        value = slice_phase(oms, sl) * ordered_integral(oms[::-1], sl.width)
        outer = flat[tup[0]]
        for k in tup[1:]:
            outer = np.multiply.outer(outer, flat[k])
        tensor += value * outer
    return tensor


def _tensor_quadrature(h: Callable, dim: int, sl: TimeSlice, order: int, grid: PanelGrid) -> np.ndarray:
    t = grid.nodes
    hv = np.asarray(h(t), dtype=complex).reshape(len(t), dim * dim)
    g = None
    for _ in range(order - 1):
        integrand = hv if g is None else np.einsum("na,nb->nab", hv, g).reshape(len(t), -1)
        g = cumulative(integrand, grid)
    if g is None:
        return integrate(hv, grid)
    return np.einsum("na,nb->ab", grid.weights[:, None] * hv, g).reshape((dim * dim,) * order)


def magnus_closed_form(h: OscillatoryHamiltonian, sl: TimeSlice, order: int) -> np.ndarray:
    """F_order of the slice from closed-form ordered integrals."""
    if order not in _EXPRESSIONS:
        raise ValueError(f"Magnus order must be 1..4, got {order}")
    if not h.terms:
        return np.zeros((h.dim, h.dim), dtype=complex)
    return contract_ordered_tensor(_tensor_closed_form(h, sl, order), order)


def magnus_numeric(h, sl: TimeSlice, order: int, dim: int | None = None,
                   max_frequency: float | None = None, norm_bound: float | None = None,
                   rel_target: float | None = None) -> np.ndarray:
    """F_order of the slice by nested Gauss-Legendre quadrature.

    ``h`` is any callable mapping an array of times to stacked matrices.
    Panels are doubled until two successive refinements agree to
    ``rel_target * max(||F||, 1e-3 * (tau * ||H||)**order)``.

    Raises
    ------
    QuadratureError
        Agreement not reached within ``MAX_PANELS`` panels.
    """
    if order not in _EXPRESSIONS:
        raise ValueError(f"Magnus order must be 1..4, got {order}")
    dim = dim or getattr(h, "dim", None) or np.asarray(h(np.zeros(1))).shape[-1]
    wmax = max_frequency if max_frequency is not None else getattr(h, "max_frequency", 0.0)
    hnorm = norm_bound if norm_bound is not None else getattr(h, "norm_bound", None)
    if hnorm is None:
        probe = np.asarray(h(np.linspace(sl.start, sl.end, 9)))
        hnorm = max(np.linalg.norm(m, 2) for m in probe)
    rel_target = TOL.quadrature_rel if rel_target is None else rel_target
    floor = 1e-3 * (sl.width * hnorm) ** order
    panels = max(1, math.ceil(sl.width * wmax / (4.0 * math.pi)))
    grid = PanelGrid(sl.start, sl.end, panels, DEFAULT_NODES)
    prev = contract_ordered_tensor(_tensor_quadrature(h, dim, sl, order, grid), order)
    err = math.inf
    while grid.panels * 2 <= MAX_PANELS:
        grid = grid.refined()
        cur = contract_ordered_tensor(_tensor_quadrature(h, dim, sl, order, grid), order)
        err = float(np.max(np.abs(cur - prev)))
        if err <= rel_target * max(float(np.max(np.abs(cur))), floor):
            return cur
        prev = cur
    raise QuadratureError(f"order-{order} quadrature did not converge", err)


def magnus_terms(h: OscillatoryHamiltonian, sl: TimeSlice, max_order: int = 2,
                 method: str = "closed") -> MagnusTerms:
    if method == "closed":
        fs = tuple(magnus_closed_form(h, sl, k) for k in range(1, max_order + 1))
    elif method == "numeric":
        fs = tuple(magnus_numeric(h, sl, k) for k in range(1, max_order + 1))
    else:
        raise ValueError(f"unknown method {method!r}")
    return MagnusTerms(fs, sl)


def antihermitian_residual(m: np.ndarray) -> float:
    return spectral_norm(0.5 * (m - m.conj().T))


def assemble_effective(terms: MagnusTerms, truncation: int) -> np.ndarray:
    """``(1/tau) sum_{i<=n} F_i``, Hermitized by its symmetric part.

    Raises
    ------
    NumericalQualityError
        The discarded anti-Hermitian part exceeds the residual tolerance.
    """
    if not 1 <= truncation <= terms.max_order:
        raise ValueError(f"truncation {truncation} outside 1..{terms.max_order}")
    m = sum(terms.F[:truncation]) / terms.slice.width
    residual = antihermitian_residual(m)
    if residual > TOL.antihermitian_residual * max(1.0, spectral_norm(m)):
        raise NumericalQualityError(f"effective Hamiltonian anti-Hermitian residual {residual:.3e}")
    return 0.5 * (m + m.conj().T)


def convergence_margin(h, sl: TimeSlice, max_frequency: float | None = None) -> float:
    """``pi - int ||H(s)|| ds`` over the slice; positive means the bound holds."""
    wmax = max_frequency if max_frequency is not None else getattr(h, "max_frequency", 0.0)
    panels = max(1, math.ceil(sl.width * wmax / (4.0 * math.pi)))
    grid = PanelGrid(sl.start, sl.end, panels, 16)

    def integral(g: PanelGrid) -> float:
        mats = np.asarray(h(g.nodes))
        norms = np.array([_hermitian_norm(m) for m in mats])
        return float(integrate(norms, g))

    prev = integral(grid)
    while grid.panels * 2 <= MAX_PANELS:
        grid = grid.refined()
        cur = integral(grid)
        if abs(cur - prev) <= TOL.convergence_quadrature * max(1.0, abs(cur)):
            return math.pi - cur
        prev = cur
    return math.pi - prev


def _hermitian_norm(m: np.ndarray) -> float:
    if not np.any(m):
        return 0.0
    try:
        from .linalg import herm_eig

        w, _ = herm_eig(as_hermitian(m))
        return float(max(abs(w[0]), abs(w[-1])))
    except ValueError:
        return spectral_norm(m)
