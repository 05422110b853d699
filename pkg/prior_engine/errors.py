"""Exception hierarchy. Validation failures also subclass ValueError."""
from __future__ import annotations

from typing import Optional


class PriorEngineError(Exception):
    """Base error for the package."""


class GeometryError(PriorEngineError, ValueError):
    """Invalid rotation, 6D vector or trajectory layout."""


class TaskSpecError(PriorEngineError, ValueError):
    """Zero or infeasible task specification."""


class PreconditionError(PriorEngineError, ValueError):
    """Operation called in a state it does not support."""


class DatasetError(PriorEngineError, ValueError):
    """Dataset cannot be built or loaded as requested."""


class MetricError(PriorEngineError, ValueError):
    """Metric with an undefined term."""

    def __init__(self, message: str, term: str):
        super().__init__(message)
        self.term = term


class StageError(PriorEngineError):
    """Pipeline stage failure."""

    def __init__(self, message: str, stage: str, cause: Optional[BaseException] = None):
        super().__init__(message)
        self.stage = stage
        self.cause = cause
