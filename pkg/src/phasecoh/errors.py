"""Exception types shared across the package."""


class PhasecohError(Exception):
    """Base class for all package errors."""


class ConfigError(PhasecohError, ValueError):
    """Invalid configuration or parameter set."""


class DomainError(PhasecohError, ValueError):
    """Argument outside the domain of an operation."""


class PrecisionError(PhasecohError, ArithmeticError):
    """A numerical scheme did not reach the requested accuracy."""


class UnresolvedPhaseError(PhasecohError, ArithmeticError):
    """Phase ensemble too diffuse for a finite Holevo variance.

    Raised instead of returning a number when the mean resultant length
    is zero, or sits below the noise floor of a finite ensemble.
    """

    def __init__(self, R, floor=0.0):
        self.R = float(R)
        self.floor = float(floor)
        super().__init__(f"phase unresolved: R={self.R:.3g} (floor {self.floor:.3g})")


class TraceFormatError(PhasecohError):
    """Malformed trace file."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class ResourceError(PhasecohError, MemoryError):
    """Requested work exceeds the configured size limits."""
