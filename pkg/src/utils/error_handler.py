"""
Error handling utilities for nnpost.

Defines the exception hierarchy raised by the numerical modules and a
centralized handler that logs errors, tracks their frequency, runs
recovery strategies and maps errors to CLI exit codes.
"""

import traceback
from typing import Any, Callable, Dict, Optional, Type

from utils.logger import get_logger

logger = get_logger("errors")


class NnpostError(Exception):
    """Base class for all nnpost errors."""


class DataValidationError(NnpostError, ValueError):
    """Input data violates a RegressionData invariant."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[int] = None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column {column}")
        if location:
            message = f"{message} (at {', '.join(location)})"
        super().__init__(message)
        self.row = row
        self.column = column


class CsvParseError(DataValidationError):
    """A CSV input file could not be parsed into numbers."""

    def __init__(self, path: str, message: str, row: Optional[int] = None, column: Optional[int] = None):
        super().__init__(f"{path}: {message}", row=row, column=column)
        self.path = path


class DimensionError(DataValidationError):
    """A vector or matrix has the wrong length for the model."""


class ConfigError(NnpostError, ValueError):
    """A setting from the config file, environment or flags is invalid."""


class SvdConvergenceError(NnpostError):
    """The singular value decomposition did not converge."""

    def __init__(self, message: str, drivers: tuple = (), info: Optional[dict] = None):
        super().__init__(message)
        self.drivers = drivers
        self.info = info or {}


class BoundsSearchError(NnpostError):
    """Automatic integration bounds could not be established."""

    def __init__(self, message: str, mode: Optional[tuple] = None, steps: Optional[int] = None):
        super().__init__(message)
        self.mode = mode
        self.steps = steps


class DegenerateGridError(NnpostError):
    """The density vanishes or is non-finite on the whole integration grid."""


class MissingFunctionalError(NnpostError, KeyError):
    """A moment needed for the posterior summary was not integrated."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "missing functional"


class NumericalError(NnpostError, ArithmeticError):
    """A computed quantity violates a numerical invariant (e.g. negative variance)."""


class SamplerError(NnpostError):
    """The Metropolis chain is unusable."""

    def __init__(self, message: str, step_scale: Optional[float] = None,
                 warmup_acceptance: Optional[float] = None):
        super().__init__(message)
        self.step_scale = step_scale
        self.warmup_acceptance = warmup_acceptance


class OracleError(NnpostError):
    """The brute-force oracle rejected its input or did not converge."""

    def __init__(self, message: str, converged: bool = True, max_change: Optional[float] = None):
        super().__init__(message)
        self.converged = converged
        self.max_change = max_change


EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_SVD = 4
EXIT_GRID = 5
EXIT_SAMPLER = 6
EXIT_IO = 7
EXIT_NUMERICAL = 8

# Order matters: subclasses before their bases.
_EXIT_CODES = (
    (ConfigError, EXIT_USAGE),
    (DataValidationError, EXIT_INPUT),
    (SvdConvergenceError, EXIT_SVD),
    (BoundsSearchError, EXIT_GRID),
    (DegenerateGridError, EXIT_GRID),
    (SamplerError, EXIT_SAMPLER),
    (MissingFunctionalError, EXIT_NUMERICAL),
    (NumericalError, EXIT_NUMERICAL),
    (OracleError, EXIT_NUMERICAL),
    (OSError, EXIT_IO),
)


class ErrorHandler:
    """
    Centralized error handler with recovery strategies.

    Tracks error frequencies, logs each error with its context and
    translates errors into process exit codes for the CLI.
    """

    def __init__(self):
        """Initialize ErrorHandler."""
        self.error_counts: Dict[str, int] = {}
        self.recovery_strategies: Dict[Type[Exception], Callable] = {
            MemoryError: self._recover_memory_error,
        }

    def handle_error(
        self,
        error: Exception,
        context: Optional[Dict[str, Any]] = None,
        recovery_strategy: Optional[Callable] = None,
        reraise: bool = False
    ) -> Optional[Any]:
        """
        Handle an error with logging and optional recovery.

        Args:
            error: The exception that occurred
            context: Additional context about where the error occurred
            recovery_strategy: Optional custom recovery function
            reraise: Whether to re-raise the error after handling

        Returns:
            Recovery result if recovery was successful, None otherwise
        """
        error_type = type(error).__name__
        error_key = f"{error_type}:{str(error)[:50]}"
        self.error_counts[error_key] = self.error_counts.get(error_key, 0) + 1

        logger.error(f"{error_type}: {error}")
        if context:
            logger.error(f"Context: {context}")
        logger.debug(f"Full traceback:\n{''.join(traceback.format_exception(error))}")

        recovery_result = None
        strategy = recovery_strategy or self._builtin_strategy(error)
        if strategy is not None:
            try:
                recovery_result = strategy(error, context or {})
                if recovery_result is not None:
                    logger.info(f"Recovered from {error_type}")
            except Exception as recovery_error:
                logger.error(f"Recovery strategy failed: {recovery_error}")

        if reraise:
            raise error

        return recovery_result

    def _builtin_strategy(self, error: Exception) -> Optional[Callable]:
        for error_type, strategy in self.recovery_strategies.items():
            if isinstance(error, error_type):
                return strategy
        return None

    def _recover_memory_error(self, error: MemoryError, context: Dict) -> None:
        """Log guidance for out-of-memory failures; nothing can be recovered."""
        size = context.get('size')
        where = f" for size {size}" if size else ""
        logger.warning(
            f"Out of memory{where}. The SVD needs about 3*n*k doubles; "
            f"try a smaller n*k, fewer --threads, or raise memory_limit_gb only "
            f"if the machine really has the memory."
        )
        return None

    @staticmethod
    def exit_code_for(error: BaseException) -> int:
        """
        Map an error to the CLI exit code of its class.

        Args:
            error: The exception to classify

        Returns:
            Integer exit code (never 0)
        """
        for error_type, code in _EXIT_CODES:
            if isinstance(error, error_type):
                return code
        return EXIT_UNEXPECTED

    def get_error_stats(self) -> Dict[str, Any]:
        """
        Get statistics about handled errors.

        Returns:
            Dictionary with error statistics
        """
        return {
            'total_unique_errors': len(self.error_counts),
            'error_counts': self.error_counts.copy(),
            'most_common_error': max(self.error_counts.items(), key=lambda x: x[1]) if self.error_counts else None
        }

    def reset_error_counts(self):
        """Reset error count statistics."""
        self.error_counts.clear()
        logger.debug("Error counts reset")


# Global error handler instance
_error_handler = None


def get_error_handler() -> ErrorHandler:
    """
    Get the global error handler instance.

    Returns:
        ErrorHandler instance
    """
    global _error_handler
    if _error_handler is None:
        _error_handler = ErrorHandler()
    return _error_handler
