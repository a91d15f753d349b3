"""
Exception hierarchy for the lab.

Commands map every LabError to exit code 1; usage problems are raised as
click.UsageError and exit with code 2.
"""


class LabError(Exception):
    """Base class for numeric and validation failures."""

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self):
        return {
            'error': type(self).__name__,
            'message': self.message,
            'details': {k: str(v) for k, v in self.details.items()}
        }


class ValidationError(LabError):
    """Input does not have the required structure (rows, words, centering)."""


class DomainError(LabError):
    """Argument outside the mathematical domain of an operation."""


class SizeError(LabError):
    """Symbol count or state space exceeds the configured limits."""


class ConvergenceError(LabError):
    """Solver failed: reducible chain, missing bracket or residual too large."""


class ClassViolationError(LabError):
    """Fiber map leaves the admissible class (non-monotone or overshooting)."""


class UnsupportedError(LabError):
    """Requested configuration is outside what the exact solvers handle."""


class MissingKeyError(ValidationError):
    """Experiment config lacks a required key (reported as a usage error)."""
