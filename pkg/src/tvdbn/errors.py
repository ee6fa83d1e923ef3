"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericalError -> 3. Everything else is a bug and propagates.
"""

from __future__ import annotations


class TvdbnError(Exception):
    """Base class for all package-raised errors."""


class ConfigError(TvdbnError):
    """Bad configuration: unknown keys, out-of-range values, missing files."""


class DataError(TvdbnError):
    """Malformed input data: ragged CSV rows, bad timestamps, shape mismatches."""


class NumericalError(TvdbnError):
    """Numerical failure: non-finite loss, degenerate statistics."""


class ShapeError(TvdbnError, ValueError):
    """Array shape violates an operation's contract."""
