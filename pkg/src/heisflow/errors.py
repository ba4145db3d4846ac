"""Shared exception types.

Kept in one place so the CLI can map failures onto its exit-code contract
without importing half the package.
"""


class HeisflowError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(HeisflowError):
    """Invalid user-facing configuration; message names the offending field."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class DegenerateGradientError(HeisflowError):
    """Horizontal gradient below the floor where a division is required."""


class NonFiniteSampleError(HeisflowError):
    """A sampled field value came out NaN or infinite."""


class EmptyBandError(HeisflowError):
    """No grid node falls inside the requested level band."""


class DomainTruncationError(HeisflowError):
    """A sublevel set or band reaches the box boundary where it must not."""


class DegenerateSurfaceError(HeisflowError):
    """Every band node was flagged characteristic."""


class NonpositiveCurvatureError(HeisflowError):
    """H0 <= 0 found where a positive-curvature integrand is required."""


class NonpositiveFieldError(HeisflowError):
    """A field required to stay strictly positive hit zero or below."""


class PullbackEscapesBoxError(HeisflowError):
    """A dilation pullback needs field values outside the sampled box."""


class LinearSolveError(HeisflowError):
    """The inner linear solver failed to reach its tolerance."""


class ConvergenceError(HeisflowError):
    """Nonlinear iteration exhausted max_iters without meeting tol."""
