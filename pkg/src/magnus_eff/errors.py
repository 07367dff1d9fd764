"""Exception hierarchy. Each class carries the CLI exit code it maps to."""

from __future__ import annotations


class MagnusEffError(Exception):
    exit_code = 1


class ConfigError(MagnusEffError, ValueError):
    exit_code = 2


class NumericalQualityError(MagnusEffError, ArithmeticError):
    """A numerical check failed (eigensolver, quadrature, oracle, residual)."""

    exit_code = 3


class EigenConvergenceError(NumericalQualityError):
    def __init__(self, sweeps: int, off_norm: float):
        super().__init__(f"Jacobi diagonalization did not converge after {sweeps} sweeps "
                         f"(off-diagonal norm {off_norm:.3e})")
        self.sweeps = sweeps
        self.off_norm = off_norm


class QuadratureError(NumericalQualityError):
    def __init__(self, message: str, error_estimate: float):
        super().__init__(f"{message} (achieved error estimate {error_estimate:.3e})")
        self.error_estimate = error_estimate


class RegimeError(MagnusEffError):
    """Parameters outside the regime a formula or the coarse-graining supports."""

    exit_code = 4

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
