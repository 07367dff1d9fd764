"""Scenario runners behind the command-line interface.

Each runner is a pure function of its configuration and returns plain data
(column dicts and JSON-ready summaries); :mod:`magnus_eff.cli` does the I/O.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import config as cfgmod
from .errors import ConfigError, MagnusEffError
from .lambda_model import (
    EffHamiltonianSpec,
    LambdaParams,
    ae_lab_hamiltonian,
    effective_lab_hamiltonian,
    free_hamiltonian,
    hamiltonian_interaction,
    hamiltonian_lab,
    me3_term,
    me4_term,
    select_tau,
    tau_diagnostics,
    to_interaction_frame,
)
from .linalg import sinc
from .magnus import TimeSlice, magnus_numeric
from .metrics import RelevantSubspace, bloch_coeffs, fidelity_reports
from .propagation import (
    Method,
    PropagatorSeries,
    TimeGrid,
    population_histories,
    probe_states,
    propagate_sliced,
    propagate_static,
)

SCHEMA_VERSION = "1"

ORDERS_OF = {Method.ME2: {2}, Method.ME24: {2, 4}, Method.ME234: {2, 3, 4}}


def params_dict(p: LambdaParams) -> dict:
    return {
        "delta": p.delta,
        "Delta": p.Delta,
        "Omega0": [abs(p.Omega0), math.atan2(p.Omega0.imag, p.Omega0.real)],
        "Omega1": [abs(p.Omega1), math.atan2(p.Omega1.imag, p.Omega1.real)],
        "eta": p.eta,
        "x": p.x,
    }


def grid_dict(g: TimeGrid) -> dict:
    return {"t_start": g.t_start, "t_end": g.t_end, "n_points": g.n_points}


def initial_states(cfg: cfgmod.ScenarioConfig) -> tuple[np.ndarray, np.ndarray]:
    if cfg.initial_state is None:
        return probe_states(cfg.params)
    a, b = cfg.initial_state
    c = bloch_coeffs(a, b)
    psi0 = np.array([c[0], c[1], 0.0], dtype=complex)
    psi1 = np.array([-np.conj(c[1]), np.conj(c[0]), 0.0], dtype=complex)
    return psi0, psi1


@dataclass(frozen=True)
class Plan:
    """Resolved time grid and slice width for a scenario."""

    grid: TimeGrid
    tau: float | None
    diagnostics: dict
    adjustments: dict


def _snap_to_slices(grid: TimeGrid, tau: float) -> tuple[TimeGrid, dict]:
    span = grid.t_end - grid.t_start
    n_slices = max(1, math.ceil(span / tau - 1e-9))
    want = grid.n_points - 1
    divisors = [d for d in range(1, n_slices + 1) if n_slices % d == 0]
    steps = min((d for d in divisors if d >= want), default=n_slices)
    new = TimeGrid(grid.t_start, grid.t_start + n_slices * tau, steps + 1)
    adj = {}
    if new.t_end != grid.t_end:
        adj["t_end"] = {"requested": grid.t_end, "used": new.t_end}
    if new.n_points != grid.n_points:
        adj["n_points"] = {"requested": grid.n_points, "used": new.n_points}
    return new, adj


def plan(cfg: cfgmod.ScenarioConfig) -> Plan:
    """Pick tau and, in the finite regime, align the grid with whole slices.

    Raises
    ------
    RegimeError
        Automatic tau selection fails while the finite regime needs it.
    """
    p = cfg.params
    if cfg.tau is not None:
        diag = tau_diagnostics(p, cfg.tau).as_dict()
        tau = cfg.tau
    else:
        tau, d = select_tau(p, strict=cfg.finite)
        diag = d.as_dict()
    if not cfg.finite:
        return Plan(cfg.grid, None, diag, {})
    grid, adj = _snap_to_slices(cfg.grid, tau)
    return Plan(grid, tau, diag, adj)


def _interaction_to_lab(series: PropagatorSeries, p: LambdaParams, label: str) -> PropagatorSeries:
    e = np.diag(free_hamiltonian(p)).real
    t = series.grid.times
    u0 = np.exp(-1j * np.outer(t, e))
    u0_start = np.exp(1j * e * series.grid.t_start)
    lab = u0[:, :, None] * series.unitaries * u0_start[None, None, :]
    return PropagatorSeries(series.grid, lab, label)


def propagators(cfg: cfgmod.ScenarioConfig, pl: Plan, methods=None) -> dict:
    """Lab-frame propagator series for each requested method."""
    p = cfg.params
    out = {}
    for m in methods or cfg.methods:
        m = Method(m)
        if m is Method.EXACT:
            out[m] = propagate_static(hamiltonian_lab(p), pl.grid, m.value)
        elif m is Method.AE:
            out[m] = propagate_static(ae_lab_hamiltonian(p), pl.grid, m.value)
        else:
            spec = EffHamiltonianSpec(ORDERS_OF[m], pl.tau)
            h_lab = effective_lab_hamiltonian(p, spec)
            if pl.tau is None:
                out[m] = propagate_static(h_lab, pl.grid, m.value)
            else:
                sliced = propagate_sliced(lambda t: to_interaction_frame(h_lab, p, t), pl.grid, pl.tau, m.value)
                out[m] = _interaction_to_lab(sliced, p, m.value)
    return out


def _summary(cmd: str, cfg: cfgmod.ScenarioConfig, pl: Plan) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": cmd,
        "params": params_dict(cfg.params),
        "grid": grid_dict(pl.grid),
        "regime": cfg.regime,
        "tau_used": pl.tau,
        "tau_diagnostics": pl.diagnostics,
        "convergence_margin": pl.diagnostics.get("convergence_margin"),
        "adjustments": pl.adjustments,
        "methods": [Method(m).value for m in cfg.methods],
    }


@dataclass(frozen=True)
class TableResult:
    columns: dict
    summary: dict


def run_simulate(cfg: cfgmod.ScenarioConfig) -> TableResult:
    pl = plan(cfg)
    psi0, psi1 = initial_states(cfg)
    two = np.array([0, 0, 1], dtype=complex)
    cols = {"t": pl.grid.times}
    for m, series in propagators(cfg, pl).items():
        h = population_histories(series, psi0, [psi0, psi1, two], ["pop_psi0", "pop_psi1", "pop_2"])
        for ch in h.channels:
            cols[f"{m.value}_{ch}"] = h[ch]
    summary = _summary("simulate", cfg, pl)
    summary["initial_state"] = {"psi0": [[z.real, z.imag] for z in psi0]}
    return TableResult(cols, summary)


def _fidelity_channels(cfg: cfgmod.ScenarioConfig, pl: Plan, emit_prime: bool):
    if Method.EXACT not in cfg.methods:
        raise ConfigError("fidelity needs Exact among the methods")
    eff = [m for m in cfg.methods if m is not Method.EXACT]
    if not eff:
        raise ConfigError("fidelity needs at least one effective method besides Exact")
    series = propagators(cfg, pl)
    sub = RelevantSubspace.lowest_two(3)
    out = {}
    for m in eff:
        reports = fidelity_reports(series[Method.EXACT], series[m], sub, emit_prime)
        ch = {
            "F": np.array([r.F for r in reports]),
            "L_m": np.array([r.L_m for r in reports]),
            "F_prime_m": np.array([r.F_prime_m for r in reports]),
        }
        if emit_prime:
            ch["F_prime"] = np.array([r.F_prime for r in reports])
        out[m] = ch
    return out


def run_fidelity(cfg: cfgmod.ScenarioConfig, emit_prime: bool | None = None) -> TableResult:
    emit_prime = cfg.emit_F_prime_exact if emit_prime is None else emit_prime
    pl = plan(cfg)
    chans = _fidelity_channels(cfg, pl, emit_prime)
    t = pl.grid.times
    cols = {"t": t}
    stats = {}
    for m, ch in chans.items():
        for name, v in ch.items():
            cols[f"{m.value}_{name}"] = v
        i = int(np.argmin(ch["F"]))
        stats[m.value] = {
            "min_F": float(ch["F"][i]),
            "t_min_F": float(t[i]),
            "max_F": float(np.max(ch["F"])),
            "max_L_m": float(np.max(ch["L_m"])),
            "min_F_prime_m": float(np.min(ch["F_prime_m"])),
            "final_F": float(ch["F"][-1]),
            "final_F_prime_m": float(ch["F_prime_m"][-1]),
        }
        if emit_prime:
            stats[m.value]["min_F_prime"] = float(np.min(ch["F_prime"]))
    summary = _summary("fidelity", cfg, pl)
    summary["window"] = stats
    return TableResult(cols, summary)


REDUCE = {
    "min_F": lambda ch: float(np.min(ch["F"])),
    "max_L": lambda ch: float(np.max(ch["L_m"])),
    "final_F_prime_m": lambda ch: float(ch["F_prime_m"][-1]),
}


def _sweep_point(args) -> list[dict]:
    raw, axis, value, reduce = args
    try:
        cfg = cfgmod.build_scenario(cfgmod.point_raw(raw, axis, value))
        pl = plan(cfg)
        chans = _fidelity_channels(cfg, pl, False)
        return [{"value": value, "method": m.value, "metric": reduce, "result": REDUCE[reduce](ch), "error": ""}
                for m, ch in chans.items()]
    except MagnusEffError as exc:
        return [{"value": value, "method": "", "metric": reduce, "result": math.nan,
                 "error": f"{type(exc).__name__}: {exc}"}]
    except ValueError as exc:
        return [{"value": value, "method": "", "metric": reduce, "result": math.nan,
                 "error": f"ValueError: {exc}"}]


def run_sweep(sw: cfgmod.SweepConfig, jobs: int = 1) -> tuple[list[dict], dict]:
    """Long-format rows ordered by axis value; failing points become error rows."""
    tasks = [(sw.raw, sw.axis, v, sw.reduce) for v in sw.values]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(t) for t in tasks]
    order = sorted(range(len(tasks)), key=lambda i: (sw.values[i], i))
    rows = [row for i in order for row in results[i]]
    summary = {
        "schema_version": SCHEMA_VERSION,
        "command": "sweep",
        "axis": sw.axis,
        "values": sorted(sw.values),
        "reduce": sw.reduce,
        "base_params": params_dict(sw.base.params),
        "failed_points": sum(1 for r in rows if r["error"]),
    }
    return rows, summary


def run_validate_tau(cfg: cfgmod.ScenarioConfig) -> dict:
    p = cfg.params
    if cfg.tau is not None:
        d = tau_diagnostics(p, cfg.tau)
    else:
        _, d = select_tau(p, strict=False)
    diag = d.as_dict()
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "validate-tau",
        "params": params_dict(p),
        "tau": diag["tau"],
        "ratio_fast": diag["ratio_fast"],
        "ratio_slow": diag["ratio_slow"],
        "convergence_margin": diag["convergence_margin"],
        "checks": {
            "fast_separation": diag["fast_ok"],
            "slow_separation": diag["slow_ok"],
            "convergence_bound": diag["convergence_ok"],
        },
        "passed": bool(diag["fast_ok"] and diag["slow_ok"] and diag["convergence_ok"]),
    }


# ---------------------------------------------------------------------------
# oracle check


def analytic_interaction_term(p: LambdaParams, order: int, tau: float) -> np.ndarray:
    """Closed-form interaction-picture ``F_order / tau`` of a centered slice at t = 0."""
    if order == 1:
        h = hamiltonian_interaction(p)
        return sum((m * sinc(w * tau / 2) for m, w in h.terms), np.zeros((3, 3), dtype=complex))
    if order == 2:
        return effective_lab_hamiltonian(p.with_(eta=0.0), EffHamiltonianSpec({2}, tau, "interaction"))
    if order == 3:
        return me3_term(p, tau)
    if order == 4:
        return me4_term(p, tau)
    raise ValueError(f"order must be 1..4, got {order}")


def _printed_denominator_variant(p: LambdaParams, tau: float) -> np.ndarray:
    # second-order term with Delta^2 - delta^4/4 in the slow coupling part
    h = analytic_interaction_term(p, 2, tau)
    pref = -p.Omega0 * np.conj(p.Omega1) / 2 * sinc(p.delta * tau / 2) * p.Delta
    shift = pref * (1 / (p.Delta**2 - p.delta**4 / 4) - 1 / (p.Delta**2 - p.delta**2 / 4))
    h = h.copy()
    h[1, 0] += shift / 2
    h[0, 1] += np.conj(shift) / 2
    return h


ORACLE_FLOOR = 1e-3


def oracle_cell(order: int, delta: float, omega: float, periods: float, Delta: float = 1.0) -> dict:
    p = LambdaParams(delta * Delta, Delta, omega * Delta, omega * Delta)
    tau = periods * 2 * math.pi / abs(Delta)
    h = hamiltonian_interaction(p)
    numeric = magnus_numeric(h, TimeSlice(0.0, tau), order) / tau
    analytic = analytic_interaction_term(p, order, tau)
    # terms that vanish identically are judged against the natural size of F_n / tau
    scale = max(float(np.max(np.abs(numeric))), ORACLE_FLOOR * h.norm_bound * (h.norm_bound / h.max_frequency) ** (order - 1))
    cell = {"order": order, "delta": delta, "Omega": omega, "tau_periods": periods, "scale": scale}
    cell["complex_deviation"] = float(np.max(np.abs(numeric - analytic))) / scale
    if order == 3:
        # defined only up to a unimodular slicing phase, so compare moduli
        cell["deviation"] = float(np.max(np.abs(np.abs(numeric) - np.abs(analytic)))) / scale
        cell["comparison"] = "modulus"
    else:
        cell["deviation"] = cell["complex_deviation"]
        cell["comparison"] = "complex"
    if order == 2 and delta != 0:
        alt = _printed_denominator_variant(p, tau)
        cell["deviation_with_delta4_denominator"] = float(np.max(np.abs(numeric - alt))) / scale
    return cell


def _oracle_task(args):
    return oracle_cell(*args)


def run_oracle_check(raw: dict, jobs: int = 1) -> dict:
    orders = [int(v) for v in cfgmod._floats(raw, "oracle_orders")]
    deltas = cfgmod._floats(raw, "oracle_deltas")
    omegas = cfgmod._floats(raw, "oracle_omegas")
    taus = cfgmod._floats(raw, "oracle_taus")
    threshold = cfgmod._float(raw, "oracle_threshold")
    if not (orders and deltas and omegas and taus):
        raise ConfigError("oracle grid must be non-empty in every dimension")
    if any(o not in (1, 2, 3, 4) for o in orders):
        raise ConfigError(f"oracle orders must be in 1..4, got {orders}")
    tasks = [(o, d, w, t) for o in orders for d in deltas for w in omegas for t in taus
             if o <= 2 or d == 0]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            cells = list(ex.map(_oracle_task, tasks))
    else:
        cells = [_oracle_task(t) for t in tasks]
    for c in cells:
        c["passed"] = c["deviation"] <= threshold
    by_order = {}
    for o in orders:
        mine = [c for c in cells if c["order"] == o]
        if mine:
            by_order[str(o)] = {"max_deviation": max(c["deviation"] for c in mine),
                                "passed": all(c["passed"] for c in mine)}
    adjud = [c for c in cells if "deviation_with_delta4_denominator" in c]
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "oracle-check",
        "threshold": threshold,
        "cells": cells,
        "by_order": by_order,
        "denominator_check": {
            "delta2_max_deviation": max((c["deviation"] for c in adjud), default=None),
            "delta4_max_deviation": max((c["deviation_with_delta4_denominator"] for c in adjud), default=None),
        },
        "max_deviation": max(c["deviation"] for c in cells),
        "passed": all(c["passed"] for c in cells),
    }
