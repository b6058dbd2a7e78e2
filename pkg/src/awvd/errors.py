"""Exception types shared across the package."""


class AwvdError(Exception):
    """Base class for all awvd errors."""


class IndexOrder(AwvdError):
    """Site pair given in the wrong index order (needs i < j)."""


class DegenerateSites(AwvdError):
    """Two sites coincide; no bisector ball exists."""


class DegenerateGamma(AwvdError):
    """Weight ratio <= 1 would make the bisector a halfspace or flip it."""


class NotOnCommonRay(AwvdError):
    """Partner sites do not lie on a common ray from the shared apex."""


class OutOfRange(AwvdError):
    """Parameter outside its admissible interval."""


class EmptyInput(AwvdError):
    """Operation requires a non-empty input."""


class OutOfRoot(AwvdError):
    """Point lies outside the root cube of the grid."""


class CubeOutsideRoot(AwvdError):
    """Cube anchor/level does not fit under the grid root."""


class EmptyOverlap(AwvdError):
    """Face enumeration certified that the region does not meet the box."""


class EmptyBallList(AwvdError):
    """Region has no defining balls where at least one is required."""


class RefinementDepthExceeded(AwvdError):
    """Refinement needs cubes finer than the grid's bit budget."""

    def __init__(self, message, apex_index=None):
        super().__init__(message)
        self.apex_index = apex_index


class CoincidentPoints(AwvdError):
    """Direction undefined because the two points coincide."""


class BudgetExceeded(AwvdError):
    """Brute-force oracle exceeded its cube budget."""
