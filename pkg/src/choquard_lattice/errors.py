"""Exception types shared across the package."""


class ChoquardError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(ChoquardError, ValueError):
    """Input outside the admissible range (bad parameters, shapes, hypotheses)."""


class CapacityError(ValidationError):
    """Requested box or table would exceed the memory budget."""


class ToleranceError(ChoquardError):
    """A refinement check did not settle within tolerance.

    ``coarse`` and ``fine`` hold the two compared values (scalars or arrays).
    """

    def __init__(self, message, coarse=None, fine=None):
        super().__init__(message)
        self.coarse = coarse
        self.fine = fine


class NumericalConsistencyError(ChoquardError):
    """Two routes that must agree (or a quantity that must vanish) did not."""


class KernelBoundError(ChoquardError):
    """A kernel table violates its declared two-sided power-law bound."""


class ProjectionError(ChoquardError):
    """A field cannot be scaled onto the Nehari manifold."""


class GeometryError(ChoquardError):
    """No negative-energy endpoint could be found along a ray."""
