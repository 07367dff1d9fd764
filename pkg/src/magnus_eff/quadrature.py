"""Composite Gauss-Legendre rules with spectral cumulative integration.

Iterated integrals over an ordered simplex ``a < s_n < ... < s_1 < b`` are
evaluated innermost-first: the running integral ``g(s) = int_a^s f(u) du`` is
tabulated on the same nodes that the next level integrates over.  Inside each
panel the antiderivative comes from the Legendre interpolant through the
Gauss nodes (exact for polynomials of degree < m), so every level converges
spectrally and nested integrals cost O(nodes) rather than O(nodes**n).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as L

DEFAULT_NODES = 32


@lru_cache(maxsize=8)
def panel_rule(m: int = DEFAULT_NODES) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nodes, weights and cumulative-integration matrix on [-1, 1].

    ``S @ f`` gives ``int_{-1}^{x_i} p(u) du`` where ``p`` interpolates ``f``.
    """
    x, w = L.leggauss(m)
    # Legendre coefficients of the interpolant: c_k = (2k+1)/2 sum_i w_i P_k(x_i) f_i
    vander = L.legvander(x, m - 1)
    to_coef = (vander * w[:, None]).T * ((2 * np.arange(m) + 1) / 2.0)[:, None]
    integ = np.empty((m, m))
    for k in range(m):
        e = np.zeros(m)
        e[k] = 1.0
        integ[:, k] = L.legval(x, L.legint(e, lbnd=-1.0))
    cum = integ @ to_coef
    return x, w, cum


@dataclass(frozen=True)
class PanelGrid:
    a: float
    b: float
    panels: int
    m: int = DEFAULT_NODES

    @property
    def half_widths(self) -> np.ndarray:
        return np.full(self.panels, (self.b - self.a) / (2.0 * self.panels))

    @property
    def nodes(self) -> np.ndarray:
        x, _, _ = panel_rule(self.m)
        edges = np.linspace(self.a, self.b, self.panels + 1)
        mids = 0.5 * (edges[:-1] + edges[1:])
        hw = 0.5 * (edges[1:] - edges[:-1])
        return (mids[:, None] + hw[:, None] * x[None, :]).reshape(-1)

    @property
    def weights(self) -> np.ndarray:
        _, w, _ = panel_rule(self.m)
        return (self.half_widths[:, None] * w[None, :]).reshape(-1)

    def refined(self) -> "PanelGrid":
        return PanelGrid(self.a, self.b, 2 * self.panels, self.m)


def cumulative(values: np.ndarray, grid: PanelGrid) -> np.ndarray:
    """Running integral from ``grid.a`` evaluated at every node.

    ``values`` has the node axis first; trailing axes are integrated componentwise.
    """
    _, w, cum = panel_rule(grid.m)
    f = values.reshape((grid.panels, grid.m) + values.shape[1:])
    hw = (grid.b - grid.a) / (2.0 * grid.panels)
    local = hw * np.einsum("ij,pj...->pi...", cum, f)
    totals = hw * np.einsum("j,pj...->p...", w, f)
    offsets = np.cumsum(totals, axis=0) - totals
    out = local + offsets[:, None, ...]
    return out.reshape(values.shape)


def integrate(values: np.ndarray, grid: PanelGrid) -> np.ndarray:
    return np.tensordot(grid.weights, values, axes=(0, 0))


def ordered_simplex(funcs, a: float, b: float, panels: int, m: int = DEFAULT_NODES) -> complex:
    """``int_{a < s_n < ... < s_1 < b} f_1(s_1) ... f_n(s_n)`` for scalar callables.

    ``funcs[0]`` attaches to the latest time ``s_1``.
    """
    grid = PanelGrid(a, b, panels, m)
    t = grid.nodes
    g = np.ones_like(t, dtype=complex)
    for f in reversed(funcs[1:]):
        g = cumulative(np.asarray(f(t), dtype=complex) * g, grid)
    return complex(integrate(np.asarray(funcs[0](t), dtype=complex) * g, grid))
