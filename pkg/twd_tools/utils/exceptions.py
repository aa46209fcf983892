"""
Custom exceptions for TWD Tools.

Provides specific exception types for different error conditions,
making error handling more precise and mapping cleanly onto CLI exit codes.
"""

from typing import Optional


class TwdToolsError(Exception):
    """Base exception for all TWD Tools errors."""
    pass


class ConfigurationError(TwdToolsError):
    """Raised when configuration is invalid or missing."""
    pass


class InvalidArgumentError(TwdToolsError, ValueError):
    """Raised when an operation's precondition is violated."""
    pass


class ShapeMismatchError(InvalidArgumentError):
    """Raised when array shapes disagree (agents, timestamps, coordinates)."""
    pass


class UndefinedInputError(InvalidArgumentError):
    """Raised when a statistic is undefined for its input (e.g. RD of two zeros)."""
    pass


class DataError(TwdToolsError):
    """Base class for problems with trajectory data or data files."""
    pass


class ParseError(DataError):
    """Raised when a raw record line cannot be parsed."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class EmptyDatasetError(DataError):
    """Raised when an operation would produce or consume a dataset with no scenes."""
    pass


class FormatError(DataError):
    """Raised when a container file has the wrong magic, version, or is truncated."""
    pass


class TrainingDivergedError(TwdToolsError):
    """Raised when the training loss becomes non-finite."""

    def __init__(self, iteration: int, loss: float):
        self.iteration = iteration
        self.loss = loss
        super().__init__(f"Training diverged at iteration {iteration} (loss={loss})")


class StageError(TwdToolsError):
    """Raised when an experiment stage fails; wraps the original error."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"Stage '{stage}' failed: {cause}")
