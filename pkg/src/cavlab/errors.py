"""Exception types shared across the package."""


class CavlabError(Exception):
    """Base class for all package errors."""


class DomainError(CavlabError, ValueError):
    """Argument outside the supported domain."""


class InvalidCurveError(CavlabError, ValueError):
    """Curve parameters violate the model requirements."""


class UnsupportedOrderError(CavlabError, ValueError):
    """Derivative order beyond what the family supports."""


class CurveParseError(CavlabError, ValueError):
    """Malformed curve specification string."""


class FlatCurveError(CavlabError, ValueError):
    """Operation requires a finite flatness exponent."""


class ResolutionError(CavlabError, RuntimeError):
    """Grid or quadrature resolution exhausted."""


class AdmissibilityError(CavlabError, ValueError):
    """Frequency direction admits no stationary point in the window."""


class QuadratureError(CavlabError, ValueError):
    """Quadrature node budget insufficient for the request."""


class GridBudgetError(CavlabError, ValueError):
    """Requested grid exceeds the cell budget."""


class ConsistencyError(CavlabError, RuntimeError):
    """Closed-form value disagrees with its independent numerical check."""
