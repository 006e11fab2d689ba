from __future__ import annotations


class LabError(Exception):
    """Base class for every error raised by the lab."""


class InvalidInputError(LabError, ValueError):
    """A precondition on an argument does not hold."""


class DomainError(LabError):
    """Sampling left the computational domain."""


class ConvergenceError(LabError):
    """An iteration left its admissible range and was aborted."""

    def __init__(self, message: str, trace: list[float] | None = None) -> None:
        super().__init__(message)
        self.trace = list(trace or [])
