"""
Logging configuration for the CSD test toolkit.

Records are JSON lines on stderr; stdout is reserved for reports. Fields
bound with ``bind_run_context`` are attached to every record of the run.
"""

import logging
import logging.handlers
import sys
from pathlib import Path
from typing import Any, Optional

import structlog

from src.errors import InvalidParameterError

LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")

_MAX_LOG_BYTES = 10 * 1024 * 1024


def setup_logging(log_level: str = "INFO", log_file: Optional[Path] = None):
    """
    Configure structlog over stdlib logging for CLI and library use.

    Args:
        log_level: One of LEVELS, case-insensitive
        log_file: Optional rotating log file

    Returns:
        Root structlog logger

    Raises:
        InvalidParameterError: If the level name is unknown
    """
    level = log_level.upper()
    if level not in LEVELS:
        raise InvalidParameterError(f"unknown log level {log_level!r}; expected one of {', '.join(LEVELS)}")

    structlog.contextvars.clear_contextvars()
    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.processors.TimeStamper(fmt="iso", utc=True),
            structlog.processors.format_exc_info,
            structlog.processors.JSONRenderer(sort_keys=True),
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        # reconfigured on every dispatch
        cache_logger_on_first_use=False,
    )

    handlers: list = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.handlers.RotatingFileHandler(log_file, maxBytes=_MAX_LOG_BYTES, backupCount=5))

    logging.basicConfig(format="%(message)s", level=getattr(logging, level), handlers=handlers, force=True)

    # Worker pools are chatty at debug level
    logging.getLogger("concurrent.futures").setLevel(logging.WARNING)

    logger = structlog.get_logger()
    logger.debug("Logging configured", level=level, file=str(log_file) if log_file else None)
    return logger


def bind_run_context(**fields: Any) -> None:
    """Attach ``fields`` (command, seed, ...) to every later record of this run."""
    structlog.contextvars.bind_contextvars(**{k: v for k, v in fields.items() if v is not None})
