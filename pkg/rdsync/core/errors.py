from __future__ import annotations

from typing import Optional


class RdsyncError(Exception):
    pass


class ConfigError(RdsyncError, ValueError):
    """Invalid experiment config. `key_path` is the dotted path of the offending entry."""

    def __init__(self, message: str, key_path: str = "") -> None:
        self.key_path = key_path
        prefix = f"{key_path}: " if key_path else ""
        super().__init__(prefix + message)


class FieldDefinitionError(RdsyncError, ValueError):
    pass


class UnknownFieldKindError(FieldDefinitionError):
    pass


class DimensionMismatchError(FieldDefinitionError):
    pass


class GridAlignmentError(RdsyncError, ValueError):
    """Raised for times that are not integer multiples of the noise step."""
    pass


class WindowError(RdsyncError, ValueError):
    pass


class NumericalError(RdsyncError):
    pass


class NumericRangeError(NumericalError):
    pass


class EigenSolverError(NumericalError):
    pass


class NewtonDivergenceError(NumericalError):
    def __init__(self, message: str, step: Optional[int] = None, residual: Optional[float] = None) -> None:
        self.step = step
        self.residual = residual
        super().__init__(message)


class ExplosionError(NumericalError):
    pass


class QRBreakdownError(NumericalError):
    def __init__(self, message: str, step: int) -> None:
        self.step = step
        super().__init__(f"{message} (step {step})")


class SeparationUnderflowError(NumericalError):
    pass


class QuadratureError(NumericalError):
    pass


class NonIntegrableDensityError(QuadratureError):
    pass


class ProofHypothesisError(NumericalError):
    pass


class ControlResidualError(NumericalError):
    pass


class AcceptanceFailure(RdsyncError):
    pass
