"""
Error hierarchy for WaveProbe.
Every error carries the process exit code the CLI reports for it.
"""
from typing import Optional


class ProbeError(Exception):
    """Base class for all toolkit errors."""
    exit_code: int = 1


class UsageError(ProbeError):
    """Bad arguments or configuration."""
    exit_code = 1


class DataError(ProbeError, ValueError):
    """Inputs that cannot be processed: shapes, files, containers, labels."""
    exit_code = 2


class StaleCacheError(DataError):
    """A cache directory was built for another model, dataset or decomposition."""


class NumericalError(ProbeError, ArithmeticError):
    """Non-finite intermediate values or divergence."""
    exit_code = 3


class StageError(ProbeError):
    """A pipeline stage failed; wraps the original error."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)


def exit_code_for(error: Optional[BaseException]) -> int:
    """Map an exception to the CLI exit code (0 when there is none)."""
    if error is None:
        return 0
    return getattr(error, "exit_code", 1)
