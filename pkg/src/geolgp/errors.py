"""Exception types shared across the package."""


class GeoLGPError(Exception):
    """Base class for all package errors."""


class DomainError(GeoLGPError, ValueError):
    """Query outside the region where an object is defined."""


class InvalidInput(GeoLGPError, ValueError):
    """Malformed or inconsistent input data."""


class NoConvergence(GeoLGPError, RuntimeError):
    """An iterative solver failed to converge.

    Attributes
    ----------
    best : object or None
        Best candidate found before giving up, if any.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ConvexityViolation(GeoLGPError, RuntimeError):
    """A geodesic left the domain, so the domain is not geodesically convex."""


class DualityGapError(GeoLGPError, RuntimeError):
    """LP duals do not close the duality gap within tolerance."""

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class CrossingRays(GeoLGPError, RuntimeError):
    """Transport rays cross at an interior point."""
