"""
Input validation utilities for the CSD services.

Validators return ``(ok, message)`` pairs; ``require`` turns a failed
check into an ``InvalidParameterError``.
"""

import math
import numbers
from typing import Iterable, Tuple

import structlog

from src.errors import InvalidParameterError

logger = structlog.get_logger(__name__)


class InputValidator:
    """Input validation utilities."""
    
    @staticmethod
    def validate_alpha(alpha: float) -> Tuple[bool, str]:
        """Validate a nominal level."""
        if not isinstance(alpha, (int, float)) or not math.isfinite(alpha):
            return False, f"alpha must be a finite number, got {alpha!r}"
        if not 0.0 < alpha < 1.0:
            return False, f"alpha must lie in (0, 1), got {alpha}"
        return True, "Valid"
    
    @staticmethod
    def validate_count(value: int, name: str, minimum: int = 1) -> Tuple[bool, str]:
        """Validate an integer count such as q_y, q_x, draws or r."""
        if isinstance(value, bool) or not isinstance(value, numbers.Integral):
            return False, f"{name} must be an integer, got {value!r}"
        if int(value) < minimum:
            return False, f"{name} must be >= {minimum}, got {value}"
        return True, "Valid"
    
    @staticmethod
    def validate_finite(values: Iterable[float], name: str) -> Tuple[bool, str]:
        """Validate that every value is a finite real."""
        for value in values:
            if not math.isfinite(value):
                return False, f"{name} contains a non-finite value ({value})"
        return True, "Valid"
    
    @staticmethod
    def validate_unit_tuple(u_tuple: Iterable[float]) -> Tuple[bool, str]:
        """Validate a strictly increasing tuple inside (0, 1)."""
        previous = 0.0
        values = list(u_tuple)
        if not values:
            return False, "evaluation tuple is empty"
        for u in values:
            if not 0.0 < u < 1.0:
                return False, f"tuple entries must lie in (0, 1), got {u}"
            if u <= previous:
                return False, "tuple entries must be strictly increasing"
            previous = u
        return True, "Valid"


def require(check: Tuple[bool, str]) -> None:
    """Raise ``InvalidParameterError`` when a validator fails."""
    ok, message = check
    if not ok:
        logger.debug("Validation failed", reason=message)
        raise InvalidParameterError(message)
