"""
Error handling and logging for the optolattice toolkit.

This module provides the exception hierarchy shared by all physics modules,
centralized error logging, and the logging setup used by the command line.
"""

import logging
import traceback
from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Optional


class OptolatticeError(Exception):
    """Base exception for optolattice errors."""

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.context = context or {}
        self.timestamp = datetime.now()

    def __reduce__(self):
        # Sweep workers send errors back across process boundaries.
        return (_rebuild_error, (self.__class__, str(self), self.__dict__.copy()))


def _rebuild_error(cls: type, message: str, state: Dict[str, Any]) -> "OptolatticeError":
    error = cls.__new__(cls)
    Exception.__init__(error, message)
    error.__dict__.update(state)
    return error


class ConfigError(OptolatticeError):
    """Invalid, unknown or inconsistent configuration keys."""
    pass


class GeometryError(OptolatticeError):
    """Beam splitter positions that are not strictly increasing or overlap."""
    pass


class LatticeOverdrivenError(OptolatticeError):
    """Polarizability too large for a real steady-state lattice constant."""
    pass


class ConvergenceError(OptolatticeError):
    """A root finder did not reach its tolerance."""

    def __init__(self, message: str, residual: float, context: Optional[Dict[str, Any]] = None):
        super().__init__(message, context)
        self.residual = residual


class IntegrationError(OptolatticeError):
    """Non-finite state during time integration."""

    def __init__(self, message: str, last_state: Any = None,
                 context: Optional[Dict[str, Any]] = None):
        super().__init__(message, context)
        self.last_state = last_state


class FitError(OptolatticeError):
    """Trajectory unsuitable for envelope fitting."""
    pass


class SpectralError(OptolatticeError):
    """No dominant spectral peak in a trajectory segment."""
    pass


class PoleError(OptolatticeError):
    """Transfer function evaluated on an undamped resonance."""
    pass


class ScenarioError(OptolatticeError):
    """Unknown scenario or malformed sweep axis."""
    pass


class ErrorSeverity(str, Enum):
    """Error severity levels."""
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    CRITICAL = "critical"


class ErrorHandler:
    """Centralized error handling and logging."""

    def __init__(self, logger_name: str = "optolattice"):
        self.logger = logging.getLogger(logger_name)
        self.error_counts: Dict[str, int] = {}
        self.last_errors: List[Dict[str, Any]] = []
        self.max_recent_errors = 10

    def log_error(self, error: Exception, context: Optional[Dict[str, Any]] = None,
                  severity: ErrorSeverity = ErrorSeverity.MEDIUM) -> None:
        """Log an error with context and severity."""
        error_type = type(error).__name__
        error_msg = str(error)

        self.error_counts[error_type] = self.error_counts.get(error_type, 0) + 1

        merged_context = dict(getattr(error, "context", {}) or {})
        merged_context.update(context or {})
        error_info = {
            "type": error_type,
            "message": error_msg,
            "context": merged_context,
            "severity": severity,
            "timestamp": datetime.now(),
            "traceback": traceback.format_exc() if self.logger.isEnabledFor(logging.DEBUG) else None
        }

        self.last_errors.append(error_info)
        if len(self.last_errors) > self.max_recent_errors:
            self.last_errors.pop(0)

        if severity == ErrorSeverity.CRITICAL:
            self.logger.critical(f"{error_type}: {error_msg}", extra={"context": merged_context})
        elif severity == ErrorSeverity.HIGH:
            self.logger.error(f"{error_type}: {error_msg}", extra={"context": merged_context})
        elif severity == ErrorSeverity.MEDIUM:
            self.logger.warning(f"{error_type}: {error_msg}", extra={"context": merged_context})
        else:
            self.logger.info(f"{error_type}: {error_msg}", extra={"context": merged_context})

    def get_error_summary(self) -> Dict[str, Any]:
        """Get summary of recent errors."""
        return {
            "error_counts": self.error_counts.copy(),
            "recent_errors": self.last_errors.copy(),
            "total_errors": sum(self.error_counts.values())
        }

    @staticmethod
    def to_record(error: Exception, context: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """Machine-readable description of an error, as printed by the CLI."""
        merged = dict(getattr(error, "context", {}) or {})
        merged.update(context or {})
        record: Dict[str, Any] = {
            "error": type(error).__name__,
            "message": str(error),
            "context": {key: _plain(value) for key, value in merged.items()},
        }
        residual = getattr(error, "residual", None)
        if residual is not None:
            record["residual"] = float(residual)
        return record


def _plain(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    return str(value)


def setup_logging(log_level: str = "INFO", log_file: Optional[str] = None,
                  rich_console: bool = False) -> ErrorHandler:
    """Setup logging configuration for the toolkit.

    Args:
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Optional log file path
        rich_console: Render console records through rich instead of a plain stream

    Returns:
        ErrorHandler instance configured for the toolkit
    """
    logger = logging.getLogger("optolattice")
    logger.setLevel(getattr(logging, log_level.upper()))

    for handler in list(logger.handlers):
        logger.removeHandler(handler)

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    if rich_console:
        from rich.logging import RichHandler

        console_handler: logging.Handler = RichHandler(show_path=False, markup=False)
        console_handler.setFormatter(logging.Formatter('%(name)s - %(message)s'))
    else:
        console_handler = logging.StreamHandler()
        console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_file:
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return ErrorHandler("optolattice")
