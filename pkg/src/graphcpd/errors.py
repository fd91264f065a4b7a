"""Exception hierarchy shared across the package."""

from __future__ import annotations


class GraphCPDError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(GraphCPDError, ValueError):
    pass


class GridMismatchError(GraphCPDError, ValueError):
    pass


class DomainError(GraphCPDError, ValueError):
    pass


class CapacityError(GraphCPDError):
    """Raised when an orthogonal tree cannot be completed.

    ``tree_index`` is the 1-based index of the tree that failed.
    """

    def __init__(self, message: str, tree_index: int, max_feasible: int | None = None):
        super().__init__(message)
        self.tree_index = tree_index
        self.max_feasible = max_feasible


class NoEvaluableSplitError(GraphCPDError):
    pass


class SegmentTooShortError(GraphCPDError, ValueError):
    pass


class DataFormatError(GraphCPDError, ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
