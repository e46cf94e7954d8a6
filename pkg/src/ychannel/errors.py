"""Exception types shared across the package."""


class YChannelError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(YChannelError, ValueError):
    """Invalid system configuration (user count or antenna counts)."""


class DimensionError(YChannelError, ValueError):
    """Matrix dimensions or antenna-subset arguments out of range."""


class NeedsExtensionError(YChannelError):
    """A stream or row count came out fractional; a symbol extension is needed.

    ``factor`` is the smallest extension factor that makes the count integral.
    """

    def __init__(self, message: str, factor: int):
        super().__init__(message)
        self.factor = factor


class InfeasibleConfigurationError(YChannelError):
    """A feasibility inequality fails for the requested configuration.

    ``inequality`` names the failing condition.
    """

    def __init__(self, message: str, inequality: str | None = None):
        super().__init__(message)
        self.inequality = inequality


class DegenerateChannelError(YChannelError):
    """A probability-zero rank deficiency occurred; reseed and investigate."""


class DegenerateSplitError(DegenerateChannelError):
    """A precoder split lost column rank; reseed or re-pick basis vectors."""


class AlignmentInfeasibleError(YChannelError):
    """A null space is too small to host the requested precoder columns."""


class AlignmentVerificationError(YChannelError):
    """An assembled scheme violates the alignment identity tolerance."""


class DecodabilityError(YChannelError):
    """The aligned basis is numerically singular; streams cannot be separated."""


class BroadcastInfeasibleError(YChannelError):
    """The downlink dual construction failed at the given dimensions."""


class StageError(YChannelError):
    """Wraps an error from one stage of the end-to-end pipeline."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
