"""Exception types shared across the solvers."""


class RuinModelError(ValueError):
    """Invalid risk-model parameters (e.g. nonpositive safety loading)."""


class UnsupportedModelError(TypeError):
    """A scheme was asked to run on a claim distribution it does not support."""


class DegenerateIntervalError(ValueError):
    """Quadrature interval too short to build a stable Gauss rule."""


class DerivationError(RuntimeError):
    """The coefficient condition system could not be solved to tolerance."""


class DivergedError(RuntimeError):
    """A solver produced a non-finite value.

    Attributes:
        step: index of the failing step.
    """

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class StepFailureError(RuntimeError):
    """A single step could not be completed (singular stage system or
    non-contracting implicit iteration)."""

    def __init__(self, message, h=None):
        super().__init__(message)
        self.h = h


class CoefficientFileError(ValueError):
    """A coefficient table file is malformed or violates the consistency
    conditions required before use."""
