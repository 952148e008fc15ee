"""Exception types raised by the library.

All errors derive from :class:`HocError` so drivers (continuation, CLI) can
catch numerical failures without masking programming errors.
"""

__all__ = [
    "HocError",
    "DimensionError",
    "DomainError",
    "NoEventError",
    "GrazingError",
    "ToleranceError",
    "CorrectorError",
    "SingularPointError",
    "UnsupportedSingularityError",
]


class HocError(Exception):
    """Base class for all library errors."""


class DimensionError(HocError, ValueError):
    """An input state or vector has the wrong length for its phase."""


class DomainError(HocError, ValueError):
    """An input state violates a precondition (e.g. starts on or past an event manifold)."""


class NoEventError(HocError):
    """The event function did not change sign within the search window."""


class GrazingError(HocError):
    """Event rate is non-negative at a crossing; saltation is undefined."""


class ToleranceError(HocError):
    """Adaptive step size underflowed before meeting the error tolerance."""


class CorrectorError(HocError):
    """Newton correction failed to converge within the iteration budget."""


class SingularPointError(HocError):
    """The residual Jacobian is rank deficient where a regular point was required."""


class UnsupportedSingularityError(HocError):
    """A singular point whose kernel dimension is not 2; branch switching unsupported."""
