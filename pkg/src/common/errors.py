"""
Exception hierarchy shared by all pipeline stages.

Every error carries a ``context`` dict so the CLI can print a structured,
one-line description of what failed and where.
"""
from typing import Any, Dict, Optional


class PipelineError(Exception):
    """Base class for errors raised by the pipeline."""

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.context = dict(context or {})

    def describe(self) -> str:
        """Render as ``<Type>: <message> {k=v, ...}``."""
        text = f"{type(self).__name__}: {self.message}"
        if self.context:
            details = ", ".join(f"{k}={v}" for k, v in sorted(self.context.items()))
            text = f"{text} {{{details}}}"
        return text


class ConfigurationError(PipelineError, ValueError):
    """Invalid configuration, schema map, field plan or ontology."""


class IngestError(PipelineError):
    """A GDELT input stream could not be read at all."""


class FilterError(PipelineError, ValueError):
    """Invalid keyword filter."""


class UnresolvedReferenceError(PipelineError):
    """A subset still has unresolved mention references."""


class GraphFormatError(PipelineError):
    """A saved graph could not be loaded."""


class GraphVersionError(GraphFormatError):
    """A saved graph was written with another schema version."""


class GraphCorruptionError(GraphFormatError):
    """A saved graph is truncated or structurally invalid."""


class NodeNotFoundError(PipelineError, KeyError):
    """A node id is not present in the graph."""

    def __str__(self) -> str:
        return self.message


class EmptyCorpusError(PipelineError, ValueError):
    """Nothing to index."""


class EmptyStoreError(PipelineError, ValueError):
    """A vector store without entries was queried."""


class EmbeddingError(PipelineError):
    """An embedding request failed or returned unusable vectors."""


class EmbeddingDimensionError(EmbeddingError):
    """The embedder changed its output dimension mid-build."""


class EmbedderMismatchError(EmbeddingError):
    """A store is being queried with a different embedder than it was built with."""


class EndpointError(PipelineError):
    """A model endpoint rejected a request."""


class TransientEndpointError(EndpointError):
    """A model endpoint failed in a way worth retrying (timeouts, 429, 5xx)."""


class UndefinedSimilarityError(PipelineError, ValueError):
    """Cosine similarity of a zero vector."""


class DimensionMismatchError(PipelineError, ValueError):
    """Two vectors of different dimensions were compared."""


class ExternalAnswerSchemaError(PipelineError, ValueError):
    """An external answer file does not match the import schema."""


class ReportWriteError(PipelineError):
    """A report could not be written."""


class StoreFormatError(PipelineError):
    """A saved vector store is truncated, of another version or not a store at all."""
