"""
Prompt assembly for the answering routes.

Every prompt has the shape ``PREFIX\\nquestion\\n\\ncontext``; only the
context differs between routes.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from src.graph.query import Subgraph
from src.retrieval.chunking import Chunk

PROMPT_PREFIX = "Please answer the question given the following information:"


@dataclass
class Prompt:
    text: str
    context_size: int
    truncated: bool = False
    empty_context: bool = False
    # edge ids (graph route) or "url#chunk" keys (RAG route) that make up the context
    context_refs: List[str] = field(default_factory=list)


def render_prompt(question: str, context: str) -> str:
    if not context:
        return f"{PROMPT_PREFIX}\n{question}\n"
    return f"{PROMPT_PREFIX}\n{question}\n\n{context}"


def build_graph_prompt(question: str, subgraph: Subgraph, max_sentences: Optional[int] = 500) -> Prompt:
    """
    Prompt with the subgraph's triple sentences, one per line, in edge-id order.

    Args:
        question: Question text
        subgraph: Result of keyword_edge_search
        max_sentences: Cap on sentences sent; None sends all

    Returns:
        Prompt with context_size = sentences sent and the truncation flag
    """
    sentences = subgraph.sentences()
    truncated = max_sentences is not None and len(sentences) > max_sentences
    if truncated:
        sentences = sentences[:max_sentences]
    return Prompt(
        text=render_prompt(question, "\n".join(s.sentence for s in sentences)),
        context_size=len(sentences),
        truncated=truncated,
        empty_context=not sentences,
        context_refs=[str(s.edge_id) for s in sentences],
    )


def chunk_ref(chunk: Chunk) -> str:
    return f"{chunk.document_identifier}#{chunk.chunk_index}"


def build_rag_prompt(question: str, chunks: Sequence[Chunk], max_chunks: Optional[int] = 20) -> Prompt:
    """
    Prompt with retrieved chunk texts separated by blank lines.

    Repeated chunks (same document and index) are sent once, in first-seen order.
    """
    distinct: List[Chunk] = []
    seen = set()
    for chunk in chunks:
        if chunk.sort_key() not in seen:
            seen.add(chunk.sort_key())
            distinct.append(chunk)

    truncated = max_chunks is not None and len(distinct) > max_chunks
    if truncated:
        distinct = distinct[:max_chunks]
    return Prompt(
        text=render_prompt(question, "\n\n".join(c.text for c in distinct)),
        context_size=len(distinct),
        truncated=truncated,
        empty_context=not distinct,
        context_refs=[chunk_ref(c) for c in distinct],
    )


def build_direct_prompt(question: str) -> Prompt:
    """The question alone, no retrieved context."""
    return Prompt(text=question, context_size=0, empty_context=True)


def parse_chunk_ref(ref: str) -> Tuple[str, int]:
    url, _, index = ref.rpartition('#')
    return url, int(index)
