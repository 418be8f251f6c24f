"""Exception hierarchy shared across the package.

The CLI maps these to process exit codes: ConfigError -> 1,
DataError -> 2, NumericalError -> 3.
"""


class ConfigError(Exception):
    """Bad usage or configuration: unknown keys, invalid values, missing paths."""


class DataError(Exception):
    """Malformed or protocol-violating input data."""


class ParseError(DataError):
    """A line in an interaction file could not be parsed."""


class ProtocolError(DataError):
    """Split contents violate the warm-start or disjointness protocol."""


class NumericalError(Exception):
    """A numerical routine failed: divergence, non-convergence, non-finite loss."""
