"""
Token chunking for article bodies.
"""
from dataclasses import dataclass
from typing import Callable, List, Optional

from src.extract.article_fetch import ArticleText

Tokenizer = Callable[[str], List[str]]

CHUNK_JOINER = " "


def whitespace_tokenize(text: str) -> List[str]:
    return text.split()


@dataclass(frozen=True)
class Chunk:
    document_identifier: str
    chunk_index: int
    text: str
    token_count: int

    def sort_key(self):
        return (self.document_identifier, self.chunk_index)

    def to_dict(self) -> dict:
        return {
            'document_identifier': self.document_identifier,
            'chunk_index': self.chunk_index,
            'text': self.text,
            'token_count': self.token_count,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Chunk":
        return cls(str(data['document_identifier']), int(data['chunk_index']),
                   str(data['text']), int(data['token_count']))


def chunk_text(doc: ArticleText, max_tokens: int = 500, tokenizer: Optional[Tokenizer] = None) -> List[Chunk]:
    """
    Pack a document's tokens greedily, left to right, into chunks of at most max_tokens.

    Args:
        doc: Article text
        max_tokens: Chunk size cap
        tokenizer: Text -> tokens (default: whitespace split)

    Returns:
        Chunks in document order; empty when the body has no tokens
    """
    if max_tokens < 1:
        raise ValueError(f"max_tokens must be >= 1, got {max_tokens}")
    tokens = (tokenizer or whitespace_tokenize)(doc.body or "")

    chunks = []
    for index, start in enumerate(range(0, len(tokens), max_tokens)):
        piece = tokens[start:start + max_tokens]
        chunks.append(Chunk(doc.document_identifier, index, CHUNK_JOINER.join(piece), len(piece)))
    return chunks
