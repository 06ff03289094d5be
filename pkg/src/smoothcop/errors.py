"""Exception hierarchy shared by all modules."""


class SmoothCopError(Exception):
    """Base class for all library errors."""


class DataError(SmoothCopError, ValueError):
    """Invalid input data (non-finite values, bad shape, unreadable file)."""


class TieError(DataError):
    """A column of the (sub-)sample contains duplicated values."""


class WindowError(SmoothCopError, ValueError):
    """Invalid sub-stretch bounds."""


class DomainError(SmoothCopError, ValueError):
    """Argument outside the domain of a function."""


class RangeError(DomainError):
    """Kendall's tau not attainable by the requested copula family."""


class ToleranceError(SmoothCopError, ArithmeticError):
    """A numerical root search did not reach its tolerance."""


class OptimFailure(SmoothCopError, ArithmeticError):
    """An optimisation problem could not be solved."""


class UnsupportedFamilyError(SmoothCopError, ValueError):
    """Operation not available for the given smoothing family."""


class BandwidthError(SmoothCopError, ValueError):
    """Finite-difference bandwidths lead to a zero denominator."""


class ConfigError(SmoothCopError, ValueError):
    """Invalid configuration (multiplier settings, CLI parameters, ...)."""
