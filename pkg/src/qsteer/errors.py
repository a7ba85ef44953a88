"""Exception types shared across the package."""


class QsteerError(Exception):
    """Base class for every error raised by this package."""


class NotHermitian(QsteerError):
    """Input matrix is not Hermitian within tolerance."""


class NoConvergence(QsteerError):
    """The eigensolver failed to converge."""


class NegativeEigenvalue(QsteerError):
    """Matrix has an eigenvalue below the allowed negative drift."""


class DimensionMismatch(QsteerError):
    """Operand dimensions are incompatible."""


class NormalizationUnderflow(QsteerError):
    """Projective branch probability at or below the cutoff floor."""

    def __init__(self, prob: float, floor: float):
        super().__init__(f"branch probability {prob:.3e} <= floor {floor:.3e}")
        self.prob = prob
        self.floor = floor


class EpisodeFinished(QsteerError):
    """step() was called on a terminal state."""


class ShapeMismatch(QsteerError):
    """Network parameter or input shapes do not line up."""


class NonFiniteLoss(QsteerError):
    """Training loss became NaN or infinite."""


class SchemaMismatch(QsteerError):
    """Checkpoint contents do not match the expected network layout."""


class BudgetExceeded(QsteerError):
    """Requested enumeration exceeds the configured budget."""


class ConfigError(QsteerError):
    """Run configuration is missing or invalid; message names the field."""


class SequenceParseError(QsteerError):
    """A sequence string could not be parsed."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (token {position})")
        self.position = position
