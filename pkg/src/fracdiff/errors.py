"""Exception types raised across the package."""

from __future__ import annotations


class FracDiffError(Exception):
    """Base class for all package errors."""


class DomainError(FracDiffError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class AccuracyError(FracDiffError, ArithmeticError):
    """The requested accuracy cannot be guaranteed for these parameters."""


class InsufficientHistoryError(FracDiffError, ValueError):
    """A discrete fractional derivative was requested with fewer than two samples."""


class AssumptionError(FracDiffError, ValueError):
    """A weight kernel or problem violates the positivity / summability assumptions."""


class ConvergenceError(FracDiffError, RuntimeError):
    """The fixed-point iteration did not reach the tolerance.

    Attributes
    ----------
    residual : float
        Sup-norm change of the last iterate.
    iterations : int
        Number of iterations performed.
    step : int or None
        Time step index, filled in by :func:`fracdiff.solver.march`.
    """

    def __init__(self, message: str, residual: float, iterations: int, step: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
        self.step = step


class DegenerateEstimateError(FracDiffError, ZeroDivisionError):
    """An order estimate was requested from a vanishing difference."""


class ConfigError(FracDiffError, ValueError):
    """Invalid experiment configuration (CLI exit status 2)."""
