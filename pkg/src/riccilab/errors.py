"""Exception types raised across the package."""


class RiccilabError(Exception):
    """Base class for all package errors."""


class InvalidStateError(RiccilabError, ValueError):
    """A metric state or field holds non-finite or out-of-range data."""


class GridMismatchError(RiccilabError, ValueError):
    """A field does not live on the grid of the state it is combined with."""


class DomainError(RiccilabError, ValueError):
    """A point, radius or time lies outside the admissible domain."""


class StabilityError(RiccilabError, ValueError):
    """An explicit time step exceeds its stability bound."""


class SingularTimeError(RiccilabError, RuntimeError):
    """The flow reached a curvature blow-up.

    ``time`` is the last time that was integrated successfully.
    """

    def __init__(self, message, time):
        super().__init__(message)
        self.time = time


class TraceWindowError(RiccilabError, ValueError):
    """A requested time window is not covered by a flow trace."""


class InsufficientRangeError(RiccilabError, ValueError):
    """A verifier was given too short a time range to be meaningful."""


class InconsistentSupError(RiccilabError, ValueError):
    """A supplied supremum bound is violated by the data it should bound."""


class MassCheckError(RiccilabError, ValueError):
    """A density that should be normalised is not."""


class ShootingError(RiccilabError, RuntimeError):
    """Soliton profile integration failed; ``diagnostics`` holds details."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(RiccilabError, ValueError):
    """Scenario configuration is malformed; ``path`` names the bad field."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
