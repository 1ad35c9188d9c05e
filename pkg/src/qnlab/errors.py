"""Exception types shared across the package."""

from __future__ import annotations


class QnlabError(Exception):
    """Base class for package errors."""


class UnsupportedTopologyError(QnlabError):
    """Operation requires a grid topology the input does not have."""


class ShapeError(QnlabError):
    """Array shape does not match the grid it is paired with."""


class NumericsError(QnlabError):
    """Non-finite values where finite numbers are required."""


class DomainError(QnlabError):
    """Input outside the mathematical domain of the operation."""


class CutoffError(QnlabError):
    """Velocity cutoff too small for the requested distribution."""


class StepRejectedError(QnlabError):
    """Time step rejected (CFL violation or vacuum state)."""

    def __init__(self, message: str, suggested_dt: float | None = None):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class ConvergenceError(QnlabError):
    """Iterative solver failed to reach tolerance."""

    def __init__(self, message: str, residual_history: list[float] | None = None):
        super().__init__(message)
        self.residual_history = residual_history or []


class ClassicalSolutionLost(QnlabError):
    """Gradient blow-up monitor tripped: smooth-solution window ended."""


class InsufficientDataError(QnlabError):
    """Time series too short for the requested diagnostic."""


class ConfigError(QnlabError):
    """Invalid experiment configuration."""
