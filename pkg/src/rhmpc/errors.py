"""Exception types shared across the package."""


class RhmpcError(Exception):
    """Base class for all package errors."""


class DimensionError(RhmpcError, ValueError):
    """Array shapes are mutually inconsistent."""


class DivergenceError(RhmpcError, ArithmeticError):
    """A simulated or optimized quantity became non-finite.

    ``time`` carries the simulation time (seconds) at which it happened,
    when known.
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class RankDeficiencyError(RhmpcError, ValueError):
    """A pair (A, C) is not observable; ``rank`` is the observability-matrix rank."""

    def __init__(self, message, rank):
        super().__init__(message)
        self.rank = rank


class ConfigError(RhmpcError, ValueError):
    """Invalid configuration or solver option; ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class DegenerateReferenceError(RhmpcError, ZeroDivisionError):
    """The reference controller's absolute index is zero, so the ratio is undefined."""

    def __init__(self, message, row):
        super().__init__(message)
        self.row = row
