"""Exception types shared across the package."""


class DagfError(Exception):
    """Base class for all package errors."""


class DimensionError(DagfError):
    """A tensor extent does not satisfy an operation's contract.

    The message names the offending axis so shape bugs are diagnosable
    from the error alone.
    """


class ConfigError(DagfError):
    """A model or run configuration value is invalid."""


class DataError(DagfError):
    """A dataset, image file, or checkpoint is missing or malformed."""


class GraphError(DagfError):
    """An autograd contract was violated (e.g. backward on a non-scalar)."""
