"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: DataError -> 2, NumericError -> 3,
anything argument-shaped is raised as ValueError before work starts.
"""


class GridpaintError(Exception):
    """Base class for package errors."""


class DataError(GridpaintError):
    """Malformed, incomplete, or missing input data."""


class NumericError(GridpaintError):
    """Numerical failure (divergence, non-finite values) during computation."""
