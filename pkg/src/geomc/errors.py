"""Exception hierarchy shared by all geomc modules.

Every error raised by the package derives from :class:`GeomcError`, so callers
can catch one type at the pipeline boundary.  The CLI maps subfamilies to exit
codes (config -> 2, data -> 3, numerical -> 4).
"""


class GeomcError(Exception):
    """Base class for all geomc errors."""


class DimensionMismatch(GeomcError):
    """Operands have incompatible shapes."""


class AsymmetricMatrix(GeomcError):
    """Matrix fails the symmetry tolerance required for factorization."""


class NotPositiveDefinite(GeomcError):
    """Cholesky factorization hit a nonpositive pivot.

    ``pivot`` is the 0-based index of the failing pivot when known.
    """

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class SingularTriangular(GeomcError):
    """Triangular solve hit a zero diagonal entry (0-based ``index``)."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class InvalidParam(GeomcError):
    """Parameter outside its admissible range."""


class OutOfSupport(GeomcError):
    """Value lies outside the support of its prior/transform."""


class TooManyKnots(GeomcError):
    """Knot count r must be strictly smaller than the observation count n."""


class RankDeficientX(GeomcError):
    """Design matrix is not of full column rank."""


class DuplicateCoords(GeomcError):
    """Coincident coordinates made a nugget-free covariance singular."""


class MissingNotAllowed(GeomcError):
    """Missing values are only accepted by the dynamic space-time model."""


class AllMissingStep(GeomcError):
    """A dynamic-model time step has no observed outcome at all."""


class ParseError(GeomcError):
    """Malformed input file; carries 1-based ``row``/``column`` context."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class ConfigError(GeomcError):
    """Invalid or incomplete run configuration."""
