"""
Vector Store - embedded article chunks with exact Euclidean nearest-neighbour search.

Build chunks every article, embeds the chunk texts in batches (bounded
parallelism, retried on transient endpoint failures) and keeps entries in
(document_identifier, chunk_index) order. Search is an exhaustive scan.
"""
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.common.errors import (
    EmbedderMismatchError,
    EmbeddingDimensionError,
    EmbeddingError,
    EmptyCorpusError,
    EmptyStoreError,
    PipelineError,
    StoreFormatError,
)
from src.common.logging import setup_logger
from src.common.state_store import write_bytes_atomic
from src.extract.article_fetch import ArticleText
from src.llm.clients import EmbeddingClient, with_retries
from src.retrieval.chunking import Chunk, Tokenizer, chunk_text

logger = setup_logger(__name__)

STORE_FORMAT = "gdelt-vector-store"
STORE_SCHEMA_VERSION = 1


@dataclass
class StoreEntry:
    chunk: Chunk
    vector: List[float]


@dataclass
class VectorStore:
    embedder_id: str
    dim: int
    entries: List[StoreEntry]
    failed: List[Dict[str, Any]] = field(default_factory=list)

    def __post_init__(self):
        for entry in self.entries:
            if len(entry.vector) != self.dim:
                raise EmbeddingDimensionError(
                    f"vector of dim {len(entry.vector)} in a dim-{self.dim} store",
                    {'document': entry.chunk.document_identifier, 'chunk': entry.chunk.chunk_index}
                )
        self._matrix = None

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = np.array([e.vector for e in self.entries], dtype=float).reshape(len(self.entries), self.dim)
        return self._matrix


def _check_vectors(vectors: List[List[float]], expected: int, dim: Optional[int], embedder_id: str) -> int:
    if len(vectors) != expected:
        raise EmbeddingError(f"expected {expected} vectors, got {len(vectors)}", {'embedder': embedder_id})
    for vector in vectors:
        if dim is None:
            dim = len(vector)
        if len(vector) != dim or dim == 0:
            raise EmbeddingDimensionError(
                f"embedder changed dimension from {dim} to {len(vector)}", {'embedder': embedder_id}
            )
        if not all(math.isfinite(x) for x in vector):
            raise EmbeddingError("embedder returned non-finite values", {'embedder': embedder_id})
    return dim


def build_store(
    corpus: Sequence[ArticleText],
    embed_client: EmbeddingClient,
    chunk_tokens: int = 500,
    batch_size: int = 32,
    retries: int = 2,
    max_workers: int = 4,
    tokenizer: Optional[Tokenizer] = None,
    backoff: float = 1.0
) -> VectorStore:
    """
    Chunk and embed a corpus.

    Args:
        corpus: Article texts; entries without a body are ignored
        embed_client: Retrieval embedder
        chunk_tokens: Tokens per chunk
        batch_size: Texts per embedding request
        retries: Extra attempts per batch on transient failures
        max_workers: Concurrent embedding requests
        tokenizer: Optional tokenizer for chunking

    Returns:
        VectorStore; batches that still fail are listed in ``failed``
    """
    chunks: List[Chunk] = []
    for doc in corpus:
        if doc.body:
            chunks.extend(chunk_text(doc, chunk_tokens, tokenizer))
    chunks.sort(key=Chunk.sort_key)
    if not chunks:
        raise EmptyCorpusError("nothing to index", {'documents': len(corpus)})

    batches = [chunks[i:i + max(1, batch_size)] for i in range(0, len(chunks), max(1, batch_size))]
    logger.info(f"Embedding {len(chunks)} chunks from {len(corpus)} documents in {len(batches)} batches")

    def _embed(batch: List[Chunk]):
        try:
            vectors = with_retries(
                lambda: embed_client.embed([c.text for c in batch]),
                retries, f"embedding batch at {batch[0].document_identifier}#{batch[0].chunk_index}", backoff
            )
            return batch, vectors, None
        except PipelineError as e:
            if isinstance(e, EmbeddingDimensionError):
                raise
            return batch, None, e

    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        outcomes = list(pool.map(_embed, batches))

    dim: Optional[int] = None
    entries: List[StoreEntry] = []
    failed: List[Dict[str, Any]] = []
    for batch, vectors, error in outcomes:
        if error is not None:
            logger.error(f"Embedding failed for {len(batch)} chunks: {error.describe()}")
            failed.extend(
                {'document_identifier': c.document_identifier, 'chunk_index': c.chunk_index, 'error': error.message}
                for c in batch
            )
            continue
        dim = _check_vectors(vectors, len(batch), dim, embed_client.embedder_id)
        entries.extend(StoreEntry(c, [float(x) for x in v]) for c, v in zip(batch, vectors))

    if not entries:
        raise EmbeddingError("no chunk could be embedded", {'failed': len(failed)})
    if failed:
        logger.warning(f"{len(failed)} chunks were not embedded and are listed in the store")

    store = VectorStore(embedder_id=embed_client.embedder_id, dim=dim, entries=entries, failed=failed)
    logger.info(f"Built vector store: {len(store)} entries, dim {dim}, embedder {store.embedder_id}")
    return store


def nearest_chunks(
    store: VectorStore,
    query_text: str,
    k: int,
    embed_client: EmbeddingClient
) -> List[Tuple[Chunk, float]]:
    """
    The k chunks closest to the embedded query, ascending by Euclidean distance.

    Ties are broken by (document_identifier, chunk_index). k larger than the
    store returns every entry.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(store) == 0:
        raise EmptyStoreError("store empty")
    if embed_client.embedder_id != store.embedder_id:
        raise EmbedderMismatchError(
            "store was built with another embedder",
            {'store': store.embedder_id, 'client': embed_client.embedder_id}
        )

    query = embed_client.embed([query_text])
    _check_vectors(query, 1, store.dim, embed_client.embedder_id)
    return rank_by_distance(store, np.asarray(query[0], dtype=float), k)


def rank_by_distance(store: VectorStore, query: np.ndarray, k: int) -> List[Tuple[Chunk, float]]:
    distances = np.linalg.norm(store.matrix - query, axis=1)
    order = sorted(
        range(len(store.entries)),
        key=lambda i: (float(distances[i]), store.entries[i].chunk.sort_key())
    )
    return [(store.entries[i].chunk, float(distances[i])) for i in order[:k]]


def store_to_bytes(store: VectorStore) -> bytes:
    document = {
        'format': STORE_FORMAT,
        'schema_version': STORE_SCHEMA_VERSION,
        'embedder_id': store.embedder_id,
        'dim': store.dim,
        'entries': [dict(e.chunk.to_dict(), vector=e.vector) for e in store.entries],
        'failed': store.failed,
    }
    return (json.dumps(document, sort_keys=True, ensure_ascii=False) + "\n").encode('utf-8')


def save_store(store: VectorStore, path: Path) -> Path:
    path = Path(path)
    write_bytes_atomic(path, store_to_bytes(store))
    logger.info(f"Saved vector store ({len(store)} entries) to {path}")
    return path


def load_store(path: Path, expected_embedder: Optional[str] = None) -> VectorStore:
    """
    Load a store written by save_store.

    Args:
        path: Store file
        expected_embedder: Configured retrieval embedder id; a different one is an error

    Returns:
        VectorStore
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Vector store not found: {path}")
    try:
        document = json.loads(path.read_text(encoding='utf-8'))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise StoreFormatError(f"unreadable vector store: {e}", {'path': str(path)}) from e

    if not isinstance(document, dict) or document.get('format') != STORE_FORMAT:
        raise StoreFormatError("not a vector store document", {'path': str(path)})
    if document.get('schema_version') != STORE_SCHEMA_VERSION:
        raise StoreFormatError(
            f"vector store schema version {document.get('schema_version')} is not supported",
            {'path': str(path)}
        )

    try:
        entries = [StoreEntry(Chunk.from_dict(raw), [float(x) for x in raw['vector']])
                   for raw in document['entries']]
        store = VectorStore(document['embedder_id'], int(document['dim']), entries, list(document.get('failed') or []))
    except (KeyError, TypeError, ValueError) as e:
        raise StoreFormatError(f"invalid vector store structure: {e}", {'path': str(path)}) from e

    if expected_embedder is not None and expected_embedder != store.embedder_id:
        raise EmbedderMismatchError(
            "store was built with another embedder",
            {'store': store.embedder_id, 'configured': expected_embedder}
        )
    logger.info(f"Loaded vector store from {path}: {len(store)} entries, embedder {store.embedder_id}")
    return store
