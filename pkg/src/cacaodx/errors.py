"""Exception types shared across the package.

Every domain failure raises a subclass of CacaoDxError so the CLI can
map "domain error" to exit code 1 while genuine bugs still surface as
ordinary tracebacks.
"""


class CacaoDxError(Exception):
    """Base class for all domain errors raised by cacaodx."""


class InvalidShapeError(CacaoDxError):
    """A shape is malformed on its own: zero/negative extent, rank too high,
    pooling window larger than the image, and similar."""


class ShapeMismatchError(CacaoDxError):
    """Two shapes that must agree do not (matmul inner dims, elementwise
    operands, conv channels, batch resolution vs. architecture)."""


class InvalidValueError(CacaoDxError):
    """Non-finite values where finite ones are required (e.g. softmax input)."""


class InvalidLabelError(CacaoDxError):
    """A class index or label name outside the configured label set."""


class ResourceLimitError(CacaoDxError):
    """Compound scaling pushed the input resolution past the configured cap."""


class DivergenceError(CacaoDxError):
    """Training produced a non-finite loss; message names the epoch."""


class EmptyClassError(CacaoDxError):
    """Rebalancing was asked to fill a class that has no samples at all."""


class StratificationError(CacaoDxError):
    """A class is too small to split into train and test portions."""


class ModelValidationError(CacaoDxError):
    """Model weights disagree with the architecture they claim to implement."""


class NotAModelError(CacaoDxError):
    """The file is not a model container (bad magic)."""


class CorruptionError(CacaoDxError):
    """The container or record log failed its integrity checks."""


class VersionError(CacaoDxError):
    """The container declares a format version this code does not know."""


class ConfigurationError(CacaoDxError):
    """Invalid configuration detected at load/startup time, never mid-request."""


class MissingRecommendationError(CacaoDxError):
    """The knowledge base has no entry for the requested label."""


class NotFoundError(CacaoDxError):
    """Lookup by id found nothing (diagnosis store, HTTP 404)."""


class InputError(CacaoDxError):
    """Malformed evaluation input: length mismatch, unknown label, empty list."""
