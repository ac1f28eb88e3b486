"""Exception hierarchy.

The CLI maps these onto exit codes (config 2, data 3, numerical 4), so every
error raised on a user-facing path should subclass one of the four below.
"""


class GridmiError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(GridmiError):
    """Invalid parameter, option, or configuration value."""


class FormatError(GridmiError):
    """Malformed file header, sidecar, or on-disk layout."""


class DataError(GridmiError):
    """Data rejected on content: non-finite values, degenerate series, too few samples."""


class ConsistencyError(GridmiError):
    """Objects that do not belong together: shape, metadata, or provenance mismatch."""


class NumericalError(GridmiError):
    """Numerical failure at run time (singularities, non-finite intermediate results)."""
