"""Exception types shared across the package."""


class LegalRankError(Exception):
    """Base class for all errors raised by this package."""


class DataFormatError(LegalRankError):
    """A file or payload does not match its documented format."""


class IngestionError(LegalRankError):
    """Input data violates an integrity constraint (duplicates, empty lists)."""


class UnknownIdError(LegalRankError):
    """A document or question id was not found where it must exist."""


class ParameterError(LegalRankError, ValueError):
    """An argument is outside its documented domain."""


class SegmenterError(LegalRankError):
    """An external segmenter process failed or misbehaved."""


class EmbeddingError(LegalRankError):
    """An embedding source could not produce vectors for some inputs."""


class IndexBuildError(LegalRankError):
    """An index could not be constructed from its inputs."""


class RemoteError(LegalRankError):
    """A remote service stayed unreachable after bounded retries."""


class ProtocolError(LegalRankError):
    """A remote service replied with a malformed or inconsistent payload."""


class ScoringError(LegalRankError):
    """A scorer could not produce relevance scores."""


class PipelineError(LegalRankError):
    """A retrieval pipeline stage failed; the message names the stage."""


class TrainingError(LegalRankError):
    """Toy training diverged or reached an invalid state."""
