"""Exception types raised across the package."""


class Kinetic1DError(Exception):
    """Base class for all package errors."""


class InvalidInputError(Kinetic1DError, ValueError):
    """Raised for out-of-domain or non-finite arguments."""


class NoApproachError(Kinetic1DError):
    """Raised when asked to collide two bodies that are not approaching."""


class ConsistencyError(Kinetic1DError):
    """Raised when the event loop detects an internally inconsistent state.

    ``dump`` carries a snapshot of the simulator state at the failure point.
    """

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump or {}


class InsufficientDataError(Kinetic1DError, ValueError):
    """Raised when a statistic needs more samples than were given."""


class ConfigError(Kinetic1DError, ValueError):
    """Raised for invalid experiment configuration documents."""
