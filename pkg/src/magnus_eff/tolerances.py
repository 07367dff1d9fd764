"""Tolerance constants shared by the library, the CLI and the acceptance tests.

All thresholds live in one frozen record. The environment variable
``MAGNUS_EFF_SEED_TOL`` multiplies every entry (default 1.0) for exploratory
runs; the test suite always runs with the default.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace


@dataclass(frozen=True)
class Tolerances:
    hermitian_rel: float = 1e-12
    unitary: float = 1e-10
    state_norm: float = 1e-12
    eig_reconstruction_rel: float = 1e-12
    expm_identity: float = 1e-14
    antihermitian_residual: float = 1e-9
    quadrature_rel: float = 1e-9
    convergence_quadrature: float = 1e-8
    resonance_rel: float = 1e-8
    population_sum: float = 1e-9
    minimizer_xatol: float = 1e-8
    oracle_rel: float = 1e-6

    def scaled(self, factor: float) -> "Tolerances":
        return replace(self, **{f.name: getattr(self, f.name) * factor for f in fields(self)})


def _from_env() -> Tolerances:
    raw = os.environ.get("MAGNUS_EFF_SEED_TOL", "1.0")
    try:
        factor = float(raw)
    except ValueError:
        factor = 1.0
    if not factor > 0:
        factor = 1.0
    return Tolerances().scaled(factor) if factor != 1.0 else Tolerances()


TOL = _from_env()
