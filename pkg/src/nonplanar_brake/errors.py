"""Exception types shared across the package."""

from __future__ import annotations


class NonplanarBrakeError(Exception):
    """Base class for all package errors."""


class OutOfDomain(NonplanarBrakeError, ValueError):
    pass


class DegenerateSurface(NonplanarBrakeError, ArithmeticError):
    pass


class SingularOffset(NonplanarBrakeError, ArithmeticError):
    """The normal offset puts the body at a centre of curvature."""


class EmptyStages(NonplanarBrakeError, ValueError):
    pass


class Infeasible(NonplanarBrakeError):
    """No speed profile satisfies the safety constraints.

    ``stage`` is the first stage whose constraints had to be relaxed in the
    phase-1 program, or ``None`` if that could not be determined.
    """

    def __init__(self, message: str, stage: int | None = None):
        super().__init__(message)
        self.stage = stage


class SolverFailure(NonplanarBrakeError):
    def __init__(self, message: str, status: str | None = None):
        super().__init__(message)
        self.status = status


class OffRoad(NonplanarBrakeError):
    def __init__(self, message: str, s: float, y: float):
        super().__init__(message)
        self.s = s
        self.y = y


class NumericalBlowup(NonplanarBrakeError, ArithmeticError):
    pass


class ConfigError(NonplanarBrakeError, ValueError):
    pass
