"""Exception hierarchy and warning categories shared across the package."""


class GarmentRetargetError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ValidationError(GarmentRetargetError):
    """Invalid arguments or data that violates a documented invariant."""

    exit_code = 2


class FormatError(ValidationError):
    """Malformed file content (OBJ, binary caches, region/anchor lists)."""


class NumericError(GarmentRetargetError):
    """Numerical failure: non-convergence, NaN gradients, singular systems."""

    exit_code = 3


class MeshWarning(UserWarning):
    """Non-fatal mesh irregularity (non-manifold edges, degenerate faces...)."""


class EmbeddingWarning(UserWarning):
    """Non-fatal embedding irregularity (dropped non-positive eigenvalues...)."""
