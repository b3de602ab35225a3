"""
Error types shared by the CSD services.

Every failure mode of the toolkit maps to one class below so callers
and the CLI can react to the kind of problem rather than its message.
"""

from typing import Optional


class CSDError(Exception):
    """Base class for toolkit errors."""
    pass


class InvalidParameterError(CSDError, ValueError):
    """A tuning parameter, level or size is outside its valid range."""
    pass


class EmptyInputError(CSDError):
    """A sample that must hold observations is empty."""
    pass


class DegenerateSplitError(CSDError):
    """An RDD split left one side without observations."""
    
    def __init__(self, side: str, cutoff: float):
        self.side = side
        self.cutoff = cutoff
        super().__init__(f"RDD split at cutoff {cutoff} left the {side} side empty")


class UndefinedStatisticError(CSDError):
    """The requested statistic has no admissible terms."""
    pass


class DegenerateMomentsError(CSDError):
    """Sample moments needed by the tuning rule cannot be formed."""
    pass


class UnsupportedSizeError(CSDError):
    """The request exceeds what an exhaustive engine can enumerate."""
    pass


class DataFileError(CSDError):
    """Malformed input data file."""
    
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class TargetError(CSDError):
    """A per-target computation failed; carries the target point."""
    
    def __init__(self, target: float, cause: Exception):
        self.target = target
        self.cause = cause
        super().__init__(f"target z0={target}: {cause}")


class SimulationError(CSDError):
    """Too many Monte Carlo replications failed."""
    pass
