from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from magnus_eff.errors import RegimeError
from magnus_eff.lambda_model import (
    EffHamiltonianSpec,
    LambdaParams,
    ae_effective,
    effective_lab_hamiltonian,
    exact_splittings_delta0,
    free_hamiltonian,
    hamiltonian_interaction,
    hamiltonian_lab,
    to_interaction_frame,
)
from magnus_eff.propagation import (
    PropagatorSeries,
    TimeGrid,
    TimeSeries,
    population_histories,
    probe_states,
    propagate_sliced,
    propagate_static,
)

TWO_PI = 2 * math.pi
BASIS = list(np.eye(3, dtype=complex))


def test_time_grid():
    g = TimeGrid(1.0, 3.0, 5)
    assert np.allclose(g.times, [1, 1.5, 2, 2.5, 3])
    for bad in ((1.0, 1.0, 5), (0.0, 1.0, 1), (0.0, math.inf, 3)):
        with pytest.raises(ValueError):
            TimeGrid(*bad)


def test_static_trivial_cases():
    g = TimeGrid(0.0, 5.0, 11)
    s = propagate_static(np.zeros((3, 3)), g)
    assert np.all(s.unitaries == np.eye(3))
    w = np.array([0.3, -1.0, 2.0])
    s = propagate_static(np.diag(w), TimeGrid(2.0, 5.0, 4))
    for t, u in zip(s.grid.times, s.unitaries):
        assert np.allclose(u, np.diag(np.exp(-1j * w * (t - 2.0))), atol=1e-14)


def test_static_matches_fine_step_product():
    p = LambdaParams(0.1, 1.0, 0.3, 0.25j)
    h = hamiltonian_lab(p)
    g = TimeGrid(0.0, 20.0, 3)
    u = propagate_static(h, g).unitaries[-1]
    step = expm(-1j * h * (20.0 / 1000))
    prod = np.eye(3)
    for _ in range(1000):
        prod = step @ prod
    assert np.linalg.norm(u - prod, 2) <= 1e-10


def test_static_group_property():
    h = hamiltonian_lab(LambdaParams(0.1, 1.0, 0.3, 0.3))
    s = propagate_static(h, TimeGrid(0.0, 10.0, 11))
    u = s.unitaries
    assert np.linalg.norm(u[3] @ u[4] - u[7], 2) < 1e-12


def test_series_validation():
    g = TimeGrid(0.0, 1.0, 2)
    with pytest.raises(ValueError):
        PropagatorSeries(g, np.stack([np.eye(2), 2 * np.eye(2)]))
    with pytest.raises(ValueError):
        PropagatorSeries(g, np.stack([np.eye(2)] * 3))
    with pytest.raises(ValueError):
        PropagatorSeries(g, np.stack([-np.eye(2), np.eye(2)]))


def test_sliced_constant_equals_static():
    h = effective_lab_hamiltonian(LambdaParams(0.0, 1.0, 0.3, 0.3), EffHamiltonianSpec({2, 4}))
    g = TimeGrid(0.0, 60 * 0.7, 21)
    a = propagate_sliced(lambda t: h, g, 0.7)
    b = propagate_static(h, g)
    assert np.max(np.abs(a.unitaries - b.unitaries)) <= 1e-12


def test_single_slice():
    h = hamiltonian_lab(LambdaParams(0.1, 1.0, 0.3, 0.3))
    calls = []
    s = propagate_sliced(lambda t: calls.append(t) or h, TimeGrid(1.0, 4.0, 2), 3.0)
    assert np.allclose(s.unitaries[1], expm(-1j * h * 3.0), atol=1e-13)
    assert calls[-1] == pytest.approx(2.5)


def test_sliced_rejects_incommensurate_grid():
    with pytest.raises(ValueError, match="remainder"):
        propagate_sliced(lambda t: np.eye(2), TimeGrid(0.0, 1.0, 4), 0.25)


def to_lab(series, p):
    e = np.diag(free_hamiltonian(p)).real
    return np.array([np.diag(np.exp(-1j * e * t)) @ u for t, u in zip(series.grid.times, series.unitaries)])


def sliced_frame_error(delta, tau=20 * TWO_PI):
    p = LambdaParams(delta, 1.0, 0.3, 0.3)
    h_lab = effective_lab_hamiltonian(p, EffHamiltonianSpec({2}, tau))
    g = TimeGrid(0.0, 10 * tau, 11)
    sliced = propagate_sliced(lambda t: to_interaction_frame(h_lab, p, t), g, tau)
    static = propagate_static(h_lab, g)
    return float(np.max(np.abs(to_lab(sliced, p) - static.unitaries)))


def test_sliced_interaction_picture_matches_lab():
    assert sliced_frame_error(0.2) <= 1e-3


def test_sliced_frame_error_is_first_order_in_delta():
    # piecewise-constant rotating coupling: error ~ (number of slices) tau^2 delta |Omega~|
    ratio = sliced_frame_error(3e-4) / sliced_frame_error(1e-4)
    assert ratio == pytest.approx(3, rel=0.05)


def test_frame_consistency_with_ode_solver():
    p = LambdaParams(0.1, 1.0, 0.3, 0.2 * np.exp(0.3j))
    h = hamiltonian_interaction(p)
    g = TimeGrid(0.0, 30.0, 7)

    def rhs(t, y):
        return (-1j * h(t) @ y.reshape(3, 3)).reshape(-1)

    sol = solve_ivp(rhs, (0.0, 30.0), np.eye(3, dtype=complex).reshape(-1), method="DOP853",
                    t_eval=g.times, rtol=1e-12, atol=1e-13)
    e = np.diag(free_hamiltonian(p)).real
    exact = propagate_static(hamiltonian_lab(p), g).unitaries
    for k, t in enumerate(g.times):
        lab = np.diag(np.exp(-1j * e * t)) @ sol.y[:, k].reshape(3, 3)
        assert np.linalg.norm(lab - exact[k], 2) <= 1e-8


def test_probe_states_examples():
    # AE block proportional to sigma_z
    psi0, psi1 = probe_states(LambdaParams(0.2, 1.0, 0.0, 0.0))
    assert np.allclose(psi0, [1 / math.sqrt(2), 1 / math.sqrt(2), 0])
    # AE block proportional to sigma_x
    psi0, _ = probe_states(LambdaParams(0.0, 1.0, 0.3, 0.3))
    assert np.allclose(psi0, [0, 1, 0], atol=1e-15)
    p = LambdaParams(0.2, 1.0, 0.3, 0.3)
    psi0, psi1 = probe_states(p)
    c = ae_effective(p)
    theta = math.atan2(abs(c.Omega_tilde), p.delta + c.S1 - c.S0)
    assert psi0[1] / psi0[0] == pytest.approx(math.tan((theta + math.pi / 2) / 2))
    assert abs(np.vdot(psi0, psi1)) < 1e-14
    assert abs(np.linalg.norm(psi0) - 1) < 1e-15


def test_probe_states_orthogonal_to_ae_generator():
    p = LambdaParams(0.2, 1.0, 0.3, 0.3)
    psi0, _ = probe_states(p)
    c = ae_effective(p)
    block = np.array([[-p.delta / 2 + c.S0, np.conj(c.Omega_tilde) / 2],
                      [c.Omega_tilde / 2, p.delta / 2 + c.S1]])
    traceless = block - np.trace(block) / 2 * np.eye(2)
    # Bloch vector of psi0 is perpendicular to that of the generator
    assert abs(np.vdot(psi0[:2], traceless @ psi0[:2])) < 1e-15


def test_probe_states_degenerate():
    with pytest.raises(RegimeError):
        probe_states(LambdaParams(0.0, 1.0, 0.0, 0.0))


def test_population_histories_identity():
    g = TimeGrid(0.0, 1.0, 3)
    s = propagate_static(np.zeros((3, 3)), g)
    psi = np.array([0.6, 0.8, 0.0], dtype=complex)
    h = population_histories(s, psi, [psi] + BASIS)
    assert np.allclose(h["pop_0"], 1.0)
    assert np.allclose(h["pop_1"], 0.36) and np.allclose(h["pop_2"], 0.64)


def test_population_histories_normalization_and_raman_period():
    p = LambdaParams(0.0, 1.0, 0.3, 0.3)
    eps10, _ = exact_splittings_delta0(p)
    period = TWO_PI / eps10
    g = TimeGrid(0.0, 3 * period, 6001)
    s = propagate_static(hamiltonian_lab(p), g)
    psi0 = np.array([1, 0, 0], dtype=complex)
    h = population_histories(s, psi0, BASIS, ["p0", "p1", "p2"])
    assert np.max(np.abs(h.values.sum(axis=1) - 1)) <= 1e-9
    # peak-to-peak spacing of the Raman transfer, fast leakage wiggles smoothed away
    p1 = np.convolve(h["p1"], np.ones(41) / 41, mode="same")
    third = len(p1) // 3
    t1 = g.times[np.argmax(p1[:third])]
    t2 = g.times[third + np.argmax(p1[third:2 * third])]
    assert t2 - t1 == pytest.approx(period, rel=0.01)
    assert period == pytest.approx(TWO_PI / (p.x * p.Delta), rel=0.05)


def test_leakage_channel():
    p = LambdaParams(0.0, 1.0, 0.3, 0.3)
    g = TimeGrid(0.0, 300.0, 1201)
    psi0, _ = probe_states(p)
    exact = population_histories(propagate_static(hamiltonian_lab(p), g), psi0, [BASIS[2]])
    eff = propagate_static(effective_lab_hamiltonian(p, EffHamiltonianSpec({2, 4})), g)
    leak_eff = population_histories(eff, psi0, [BASIS[2]])
    assert np.max(leak_eff.values) <= 1e-14
    assert 0 < np.max(exact.values) <= 4 * p.x


def test_time_series_validation():
    g = TimeGrid(0.0, 1.0, 2)
    with pytest.raises(ValueError):
        TimeSeries(g, ("a",), np.zeros((3, 1)))
