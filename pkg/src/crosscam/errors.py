"""Exception types shared across the package."""


class CrosscamError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(CrosscamError):
    """Invalid configuration value (zero-area arena, T=0, bad threshold...)."""


class ShapeError(CrosscamError):
    """Operands have mismatched dimensions."""


class DecodeError(CrosscamError):
    """Encoded payload is malformed, truncated, or fails its checksum."""


class ProtocolError(CrosscamError):
    """Decoder was driven incorrectly (e.g. delta frame without a reference)."""


class InfeasibleCoverError(CrosscamError):
    """A coverage row has no covering tile; carries the offending object key."""

    def __init__(self, object_key):
        self.object_key = object_key
        super().__init__(f"object {object_key!r} is not covered by any tile")


class IntegrityError(CrosscamError):
    """Conflicting duplicate record on ingest."""


class MetricUndefinedError(CrosscamError):
    """Metric has an empty denominator (no camera with ground truth)."""


class StageFailure(CrosscamError):
    """A pipeline stage failed; partial artifacts are preserved on disk."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")
