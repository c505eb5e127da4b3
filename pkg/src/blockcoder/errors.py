"""Exception types shared across the pipeline.

Precondition violations on plain values (bad box bounds, mismatched raster
shapes, out-of-range scores) raise ValueError; everything that names a
pipeline failure mode gets its own class so callers can route on it.
"""

from __future__ import annotations


class BlockcoderError(Exception):
    """Base class for every pipeline-specific error."""


class ConfigError(BlockcoderError):
    """Invalid configuration file, key, or command usage."""


class OcrFormatError(BlockcoderError):
    """An OCR regions document does not match the interchange format."""


class TransportError(BlockcoderError):
    """Network-level failure talking to a chat or embedding endpoint."""


class EndpointError(BlockcoderError):
    """The endpoint answered with a non-2xx status."""

    def __init__(self, status: int, body_excerpt: str):
        super().__init__(f"endpoint returned HTTP {status}: {body_excerpt}")
        self.status = status
        self.body_excerpt = body_excerpt


class EmptyResponseError(BlockcoderError):
    """The endpoint answered 2xx but with no usable text."""


class ExtractionError(BlockcoderError):
    """No HTML document could be extracted from a model response."""


class ContextOverflowError(BlockcoderError):
    """An assembly prompt does not fit the configured context budget."""

    def __init__(self, estimate: int, budget: int):
        super().__init__(f"estimated {estimate} tokens exceeds context budget {budget}")
        self.estimate = estimate
        self.budget = budget


class RenderError(BlockcoderError):
    """Screenshot rendering failed (command error, timeout, bad output)."""


class SelectionError(BlockcoderError):
    """No assembly candidate could be rendered and scored."""


class DomParseError(BlockcoderError):
    """Input yielded no recoverable DOM at all."""


class ProtocolError(BlockcoderError):
    """An embedding service returned vectors that do not line up."""


class StageError(BlockcoderError):
    """A pipeline stage failed fatally; carries the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
