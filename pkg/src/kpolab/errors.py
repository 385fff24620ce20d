"""Exception and warning types shared across the package."""


class KPOError(Exception):
    """Base class for all package errors."""


class ConfigError(KPOError, ValueError):
    """Invalid control parameters or run configuration."""


class NumericalError(KPOError, RuntimeError):
    """A numerical routine failed its contract (e.g. eigensolver non-convergence)."""


class ConvergenceError(NumericalError):
    pass


class TrackingError(NumericalError):
    """Sweep grid too coarse to follow levels through an interval."""

    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


class PhysicsError(KPOError):
    """A physical precondition of the requested analysis does not hold."""


class UnboundedHamiltonianError(PhysicsError):
    pass


class TopologyError(PhysicsError):
    """Phase space lacks the hyperbolic point / local maximum needed for a region mask."""


class GradientError(PhysicsError, ValueError):
    """Point passed to the stationary-point classifier is not stationary."""


class TruncationWarning(UserWarning):
    """Fewer levels than requested survived the truncation-doubling test."""

    def __init__(self, message, first_unconverged=None):
        super().__init__(message)
        self.first_unconverged = first_unconverged


class TruncationError(ConfigError):
    """Fock truncation too small for the requested coherent amplitude."""
