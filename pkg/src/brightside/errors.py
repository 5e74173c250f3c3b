"""Exception types shared across the package."""


class BrightsideError(Exception):
    """Base class for all package-specific errors."""


class GeometryError(BrightsideError, ValueError):
    """Invalid geometric configuration or input."""


class ObserverOutsideBall(GeometryError):
    """Observer longitude/latitude lies outside the admissible ball."""


class NonpositiveScale(GeometryError):
    """Scale parameter must be strictly positive."""


class BoundaryWithoutSymmetry(GeometryError):
    """Latitude 2 (classical stereographic case) requires zero longitude."""


class DarkSidePoint(GeometryError):
    """Sphere point at or above the observer latitude; projection undefined."""


class NegativeDiscriminant(GeometryError):
    """Chord-scale quadratic has no real root; observer configuration invalid."""


class NonfiniteInput(GeometryError):
    """Input contains NaN or infinity."""


class DomainError(BrightsideError, ValueError):
    """Argument outside the mathematical domain of a special function."""


class DegenerateProposal(BrightsideError, RuntimeError):
    """Proposal coincides with or is antipodal to the current state."""


class NonfiniteGradient(BrightsideError, RuntimeError):
    """A gradient evaluation returned NaN or infinity."""


class EmptyInput(BrightsideError, ValueError):
    """Too few samples for the requested statistic."""


class ChainAborted(BrightsideError, RuntimeError):
    """Chain run failed; carries the partial output flagged invalid."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class TuningFailed(BrightsideError, RuntimeError):
    """Optimizer aborted, e.g. repeated non-finite objective values."""
