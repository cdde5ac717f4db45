"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataQualityError -> 2,
NumericalError -> 3. Plain ValueError is reserved for contract violations
(bad argument shapes etc.) and maps to exit code 1 as well.
"""


class FlowcastError(Exception):
    pass


class ConfigError(FlowcastError):
    """Bad configuration or command-line usage."""


class DataQualityError(FlowcastError):
    """Input data violates a quality requirement (missing data, bad rows)."""


class NumericalError(FlowcastError):
    """A numerical procedure failed (degenerate matrix, no convergence)."""
