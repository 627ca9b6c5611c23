"""Exception hierarchy shared across the library."""


class OrthoposError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameter(OrthoposError):
    """Parameter matrix is malformed (non-square, non-finite, ...)."""


class NotOrthogonal(OrthoposError):
    """Matrix failed orthogonality validation at construction."""


class DimensionError(OrthoposError):
    """Incompatible or unsupported array dimensions."""


class NotSpecialOrthogonal(OrthoposError):
    """Operation requires determinant +1 but the input has determinant -1."""


class LogFailed(OrthoposError):
    """Matrix logarithm did not reconstruct its input within tolerance."""


class DecompositionFailed(OrthoposError):
    """Eigen/Schur decomposition failed or did not reproduce the input."""


class StructureMismatch(OrthoposError):
    """Path word or position does not conform to the declared structure."""


class InversionUnavailable(OrthoposError):
    """Inversion requested under absolute (monoid) semantics."""


class InvalidGenerator(OrthoposError):
    """Generator index outside the declared branching/axis range."""


class DimensionSplitError(OrthoposError):
    """Ambient dimension is not evenly divisible across grid axes."""


class InvalidPositionTensor(OrthoposError):
    """A positional operator slice failed orthogonality validation."""
