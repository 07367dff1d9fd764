from __future__ import annotations

import numpy as np

from magnus_eff.magnus import ordered_integral
from magnus_eff.quadrature import PanelGrid, cumulative, integrate, ordered_simplex, panel_rule


def test_panel_rule_weights_sum_to_interval():
    x, w, cum = panel_rule(16)
    assert abs(w.sum() - 2) < 1e-14
    assert np.allclose(cum @ np.ones(16), x + 1, atol=1e-13)


def test_cumulative_exact_for_polynomials():
    g = PanelGrid(-0.5, 2.0, 3, 8)
    t = g.nodes
    f = 3 * t**2 - t + 1
    expected = (t**3 - t**2 / 2 + t) - ((-0.5) ** 3 - 0.125 - 0.5)
    assert np.allclose(cumulative(f, g), expected, atol=1e-13)


def test_integrate_oscillatory():
    g = PanelGrid(0.0, 10.0, 4)
    val = integrate(np.exp(2j * g.nodes), g)
    assert abs(val - (np.exp(20j) - 1) / 2j) < 1e-13


def test_cumulative_matrix_valued():
    g = PanelGrid(0.0, 1.0, 2, 12)
    vals = np.stack([np.cos(g.nodes), np.sin(g.nodes)], axis=1)
    out = cumulative(vals, g)
    assert np.allclose(out[:, 0], np.sin(g.nodes), atol=1e-14)
    assert np.allclose(out[:, 1], 1 - np.cos(g.nodes), atol=1e-14)


def test_ordered_simplex_matches_closed_form():
    w = [0.7, -1.3, 2.1]
    funcs = [lambda t, om=om: np.exp(1j * om * t) for om in w]
    val = ordered_simplex(funcs, 0.0, 3.0, 4)
    # funcs[0] is latest; ordered_integral lists earliest first
    assert abs(val - ordered_integral(w[::-1], 3.0)) < 1e-12
