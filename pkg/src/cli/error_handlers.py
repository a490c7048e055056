"""Centralized mapping from exceptions to CLI error reports and exit codes."""

from typing import Any

from src.models.errors import ConfigError, NumericalError, RegVarError


class ExitCode:
    """Process exit codes of the command surface."""

    OK = 0
    INTERNAL = 1
    CONFIG = 2
    NUMERICAL = 3


class ErrorResponse:
    """Standardized error report printed to stderr."""

    def __init__(
        self,
        error_code: str,
        message: str,
        details: dict[str, Any] | None = None,
        exit_code: int = ExitCode.CONFIG,
    ):
        """
        Initialize error response.

        Args:
            error_code: Stable code of the exception family
            message: Human-readable error message
            details: Additional fields (line numbers, eigenvalues, validation errors)
            exit_code: Process exit code
        """
        self.error_code = error_code
        self.message = message
        self.details = details
        self.exit_code = exit_code

    def to_dict(self) -> dict[str, Any]:
        """Convert to a JSON-ready dictionary."""
        response: dict[str, Any] = {
            "error": self.error_code,
            "message": self.message,
        }
        if self.details:
            response["details"] = self.details
        return response


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ConfigError | ValueError | FileNotFoundError):
        return ExitCode.CONFIG
    if isinstance(exc, NumericalError | ArithmeticError):
        return ExitCode.NUMERICAL
    return ExitCode.INTERNAL


def handle_error(exc: BaseException, context: dict[str, Any] | None = None) -> ErrorResponse:
    """
    Map any exception to an ErrorResponse.

    Args:
        exc: The exception raised by a command
        context: Command context merged into the details (command name, dataset, seed)

    Returns:
        ErrorResponse carrying the exit code of the exception family
    """
    details = dict(context or {})
    if isinstance(exc, RegVarError):
        details.update({k: v for k, v in exc.details.items() if v is not None})
        return ErrorResponse(exc.code, exc.message, details or None, exit_code_for(exc))
    code = exit_code_for(exc)
    if code == ExitCode.CONFIG:
        error_code = "FILE_NOT_FOUND" if isinstance(exc, FileNotFoundError) else "VALIDATION_ERROR"
        return ErrorResponse(error_code, str(exc), details or None, code)
    if code == ExitCode.NUMERICAL:
        return ErrorResponse("NUMERICAL_ERROR", str(exc), details or None, code)
    return ErrorResponse(
        "INTERNAL_ERROR",
        f"Unexpected {type(exc).__name__}: {exc}",
        details or None,
        ExitCode.INTERNAL,
    )
