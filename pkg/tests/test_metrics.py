from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from scipy.stats import unitary_group

from magnus_eff.errors import NumericalQualityError
from magnus_eff.lambda_model import (EffHamiltonianSpec, LambdaParams, effective_lab_hamiltonian,
                                     hamiltonian_lab)
from magnus_eff.metrics import (RelevantSubspace, bloch_angles, bloch_coeffs, fidelity_report,
                                fidelity_timeseries, leakage, postselect_fidelity, subspace_fidelity)
from magnus_eff.propagation import TimeGrid, propagate_static

SUB = RelevantSubspace.lowest_two(3)


def brute_force(objective, n):
    a = np.linspace(0.0, math.pi, n)
    b = np.arange(n) * (2 * math.pi / n)
    aa, bb = np.meshgrid(a, b, indexing="ij")
    return float(np.min(objective(bloch_coeffs(aa, bb))))


def block(m2):
    u = np.eye(3, dtype=complex)
    u[:2, :2] = m2
    return u


def leak_rotation(lam):
    u = np.eye(3, dtype=complex)
    c, s = math.cos(lam), math.sin(lam)
    u[0, 0], u[2, 0], u[0, 2], u[2, 2] = c, s, -s, c
    return u


def test_subspace_projector_invariants():
    p = SUB.projector
    assert np.allclose(p @ p, p)
    assert np.allclose(p, p.conj().T)
    assert np.trace(p).real == pytest.approx(2.0)


def test_subspace_rejects_non_orthonormal_basis():
    with pytest.raises(ValueError):
        RelevantSubspace(np.array([[1, 1], [0, 1], [0, 0]], dtype=complex))


def test_bloch_roundtrip():
    for a, b in [(0.3, 1.2), (2.9, 5.5), (math.pi / 2, 0.0)]:
        a2, b2 = bloch_angles(np.exp(0.7j) * bloch_coeffs(a, b))
        assert a2 == pytest.approx(a, abs=1e-12)
        assert abs(np.exp(1j * b2) - np.exp(1j * b)) <= 1e-12


def test_identical_unitaries_give_unit_fidelity():
    u = unitary_group.rvs(3, random_state=1)
    f, psi = subspace_fidelity(u, u)
    assert f == pytest.approx(1.0, abs=1e-12)
    assert SUB.contains(psi)


@pytest.mark.parametrize("phi", [0.3, 1.0, 2.5])
def test_relative_phase_gives_cos_squared(phi):
    f, psi = subspace_fidelity(np.eye(3), block(np.diag([1, np.exp(1j * phi)])))
    assert f == pytest.approx(math.cos(phi / 2) ** 2, abs=1e-12)
    # attained at equal superposition
    assert abs(psi[0]) ** 2 == pytest.approx(0.5, abs=1e-6)


def test_swap_gives_zero_at_basis_state():
    f, psi = subspace_fidelity(np.eye(3), block(np.array([[0, 1], [1, 0]])))
    assert f == pytest.approx(0.0, abs=1e-14)
    assert max(abs(psi[0]), abs(psi[1])) == pytest.approx(1.0, abs=1e-6)


def test_leakage_examples():
    assert leakage(block(unitary_group.rvs(2, random_state=3)), [1, 0, 0]) == pytest.approx(0.0, abs=1e-14)
    swap02 = np.eye(3)[[2, 1, 0]]
    assert leakage(swap02, [1, 0, 0]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        leakage(np.eye(3), [0, 0, 1])


def test_exact_dynamics_leakage_is_order_x():
    p = LambdaParams(0.0, 1.0, 0.3, 0.3)
    s = propagate_static(hamiltonian_lab(p), TimeGrid(0.0, 200.0, 801))
    psi = np.array([1, 1, 0]) / math.sqrt(2)
    max_l = max(leakage(u, psi) for u in s.unitaries)
    assert 0 < max_l <= 4 * p.x


def test_postselect_trivial_for_block_diagonal():
    u = block(unitary_group.rvs(2, random_state=4))
    f, _ = postselect_fidelity(u, u)
    assert f == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("lam", [0.3, 0.8, 1.2])
def test_pure_leak_rotation_matches_hand_analysis_and_brute_force(lam):
    u = leak_rotation(lam)
    fp, _ = postselect_fidelity(u, np.eye(3))
    f, _ = subspace_fidelity(u, np.eye(3))
    c = math.cos(lam)
    assert fp == pytest.approx(4 * c / (1 + c) ** 2, abs=1e-10)
    assert f == pytest.approx(c * c, abs=1e-10)

    def objective(coef):
        p0 = np.abs(coef[..., 0]) ** 2
        return (p0 * c + 1 - p0) ** 2 / (p0 * c * c + 1 - p0)

    assert fp <= brute_force(objective, 512) + 1e-12
    assert fp == pytest.approx(brute_force(objective, 512), abs=1e-5)


def test_postselect_all_leaking_raises():
    # every relevant state is sent entirely to |2>: impossible for a unitary with a 2D subspace,
    # so use a 4-level space with a 2D relevant subspace mapped onto the complement
    u = np.eye(4)[[2, 3, 0, 1]]
    sub = RelevantSubspace.lowest_two(4)
    with pytest.raises(NumericalQualityError):
        postselect_fidelity(u, np.eye(4), sub)


def test_postselect_partial_exclusion_warns():
    u = np.eye(3)[[2, 1, 0]]
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        fp, _ = postselect_fidelity(u, np.eye(3))
    assert any(issubclass(w.category, RuntimeWarning) for w in rec)
    assert 0.0 <= fp <= 1.0 + 1e-9


@pytest.mark.parametrize("seed", range(6))
def test_random_pairs_prime_bounds(seed):
    u = unitary_group.rvs(3, random_state=seed)
    ue = unitary_group.rvs(3, random_state=100 + seed)
    r = fidelity_report(u, ue, exact_prime=True)
    assert r.F <= r.F_prime_m + 1e-12
    assert r.F <= r.F_prime + 1e-12
    assert -1e-12 <= r.F <= 1 + 1e-9
    assert 0 <= r.L_m <= 1
    assert r.minimizer_residual >= 0


@pytest.mark.parametrize("seed", range(4))
def test_prime_approximant_close_for_small_errors(seed):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    g = (g + g.conj().T) * 0.01
    w, v = np.linalg.eigh(g)
    u = v @ np.diag(np.exp(-1j * w)) @ v.conj().T
    r = fidelity_report(u, np.eye(3), exact_prime=True)
    assert 1 - r.F < 0.01 and r.L_m < 0.01
    assert abs(r.F_prime_m - r.F_prime) < 0.01


def test_global_phase_invariance():
    u = unitary_group.rvs(3, random_state=7)
    ue = unitary_group.rvs(3, random_state=8)
    gamma = 1.234
    a = fidelity_report(u, ue, exact_prime=True)
    b = fidelity_report(u, np.exp(1j * gamma) * ue, exact_prime=True)
    assert abs(a.F - b.F) <= 1e-12
    assert abs(a.F_prime - b.F_prime) <= 1e-12
    assert abs(a.L_m - b.L_m) <= 1e-12


def test_refined_not_above_grid_minimum():
    for seed in range(5):
        u = unitary_group.rvs(3, random_state=seed)
        r = fidelity_report(u, np.eye(3))
        assert r.minimizer_residual >= 0


def test_unit_fidelity_implies_no_leakage_for_block_generator():
    u = block(unitary_group.rvs(2, random_state=9))
    r = fidelity_report(u, u)
    assert r.F == pytest.approx(1.0, abs=1e-12)
    assert r.L_m <= 1e-9
    assert r.F_prime_m == pytest.approx(1.0, abs=1e-12)


def _series(eta):
    p = LambdaParams(0.0, 1.0, 0.3, 0.3, eta)
    g = TimeGrid(0.0, 150.0, 31)
    return (propagate_static(hamiltonian_lab(p), g),
            propagate_static(effective_lab_hamiltonian(p, EffHamiltonianSpec({2, 4})), g, "ME24"))


@pytest.mark.parametrize("eta", [1.0, 10.0])
def test_gauge_shift_end_to_end(eta):
    ref = fidelity_timeseries(*_series(0.0))
    shifted = fidelity_timeseries(*_series(eta))
    assert np.max(np.abs(ref.values - shifted.values)) <= 1e-10


def test_identical_series_fidelity_one():
    s, _ = _series(0.0)
    ts = fidelity_timeseries(s, s)
    assert np.max(np.abs(ts["F"] - 1)) <= 1e-12
    assert ts.channels == ("F", "L_m", "F_prime_m")


def test_grid_mismatch_raises():
    s, _ = _series(0.0)
    other = propagate_static(np.eye(3), TimeGrid(0.0, 100.0, 31))
    with pytest.raises(ValueError):
        fidelity_timeseries(s, other)


def test_shape_mismatch_raises():
    with pytest.raises(ValueError):
        subspace_fidelity(np.eye(3), np.eye(2))


def test_degenerate_argmin_takes_least_leaking_state():
    # relevant block of U^dagger U_eff is m0 + mx sigma_x: the minimizers form a circle
    phi = 0.8
    m = np.array([[math.cos(phi), 1j * math.sin(phi)], [1j * math.sin(phi), math.cos(phi)]])
    u_eff = block(m)
    lam = 0.4
    u = leak_rotation(lam)
    r = fidelity_report(u, u @ u_eff)
    # brute force over the circle of minimizers of |cos(phi) + i sin(phi) n_x|^2 (n_x = 0)
    best_leak = min(leakage(u, [math.cos(a / 2), math.sin(a / 2) * 1j, 0]) for a in np.linspace(0, math.pi, 2001))
    assert r.F == pytest.approx(math.cos(phi) ** 2, abs=1e-12)
    assert r.L_m == pytest.approx(best_leak, abs=1e-9)


def test_identity_block_takes_least_leaking_state():
    u = leak_rotation(0.5)
    r = fidelity_report(u, u)
    assert r.F == pytest.approx(1.0, abs=1e-12)
    assert r.L_m == pytest.approx(0.0, abs=1e-12)


def test_argmin_is_stable_under_roundoff_perturbation():
    u = unitary_group.rvs(3, random_state=11)
    v = unitary_group.rvs(3, random_state=12)
    a = fidelity_report(u, v)
    b = fidelity_report(u, v * np.exp(1e-13j) + 1e-14)
    assert abs(a.L_m - b.L_m) <= 1e-11
