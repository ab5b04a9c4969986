"""
Model clients: OpenAI-compatible chat completions and embeddings over HTTP,
plus deterministic stubs used for offline runs and tests.
"""
import hashlib
import re
import time
from typing import Callable, List, Optional, Protocol, Sequence, Tuple, TypeVar

import requests

from src.common.config import Config, EndpointConfig
from src.common.errors import ConfigurationError, EmbeddingError, EndpointError, TransientEndpointError
from src.common.logging import setup_logger
from src.qa.prompts import PROMPT_PREFIX

logger = setup_logger(__name__)

T = TypeVar('T')

STUB_CHAT_MODEL = "stub-echo"
STUB_MAX_LINES = 5
EMPTY_TEXT_TOKEN = "<empty>"

# Words that carry no signal when the stub ranks context lines
STOPWORDS = frozenset({
    'a', 'an', 'and', 'are', 'as', 'at', 'be', 'by', 'did', 'do', 'for', 'from', 'how',
    'in', 'is', 'it', 'its', 'many', 'of', 'on', 'or', 'that', 'the', 'this', 'to',
    'was', 'were', 'what', 'when', 'where', 'which', 'who', 'with',
})


class ChatClient(Protocol):
    model: str

    def complete(self, prompt: str) -> str: ...


class EmbeddingClient(Protocol):
    embedder_id: str

    def embed(self, texts: Sequence[str]) -> List[List[float]]: ...


def words(text: str) -> List[str]:
    return re.findall(r"[a-z0-9]+", text.casefold())


def with_retries(func: Callable[[], T], retries: int, what: str, backoff: float = 1.0) -> T:
    """Call func, retrying TransientEndpointError up to `retries` more times."""
    attempt = 0
    while True:
        try:
            return func()
        except TransientEndpointError as e:
            if attempt >= retries:
                logger.error(f"{what} failed after {attempt + 1} attempts: {e.message}")
                raise
            delay = backoff * (2 ** attempt)
            logger.warning(f"{what} attempt {attempt + 1} failed ({e.message}); retrying in {delay:.1f}s")
            if delay > 0:
                time.sleep(delay)
            attempt += 1


def post_json(session: requests.Session, url: str, payload: dict, api_key: Optional[str], timeout: float) -> dict:
    """POST a JSON body and map transport/HTTP failures onto endpoint errors."""
    headers = {'Content-Type': 'application/json'}
    if api_key:
        headers['Authorization'] = f"Bearer {api_key}"
    try:
        response = session.post(url, json=payload, headers=headers, timeout=timeout)
    except requests.Timeout as e:
        raise TransientEndpointError(f"timeout: {e}", {'url': url}) from e
    except requests.ConnectionError as e:
        raise TransientEndpointError(f"connection failed: {e}", {'url': url}) from e
    except requests.RequestException as e:
        raise EndpointError(f"request failed: {e}", {'url': url}) from e

    if response.status_code == 429 or response.status_code >= 500:
        raise TransientEndpointError(f"HTTP {response.status_code}", {'url': url})
    if response.status_code >= 400:
        raise EndpointError(f"HTTP {response.status_code}: {response.text[:200]}", {'url': url})
    try:
        return response.json()
    except ValueError as e:
        raise EndpointError(f"response is not JSON: {e}", {'url': url}) from e


class OpenAICompatibleChatClient:
    """Chat completions against any OpenAI-compatible /chat/completions endpoint."""

    def __init__(self, endpoint: EndpointConfig, api_key: Optional[str] = None,
                 session: Optional[requests.Session] = None):
        self.endpoint = endpoint
        self.model = endpoint.model
        self.api_key = api_key
        self.session = session or requests.Session()
        self.url = endpoint.base_url.rstrip('/') + '/chat/completions'

    def complete(self, prompt: str) -> str:
        payload = {
            'model': self.model,
            'messages': [{'role': 'user', 'content': prompt}],
            'temperature': self.endpoint.temperature,
            'max_tokens': self.endpoint.max_output_tokens,
        }
        data = post_json(self.session, self.url, payload, self.api_key, self.endpoint.timeout)
        choices = data.get('choices') if isinstance(data, dict) else None
        if not isinstance(choices, list) or not choices:
            raise EndpointError("response has no choices", {'model': self.model})
        message = choices[0].get('message') if isinstance(choices[0], dict) else None
        if not isinstance(message, dict) or not isinstance(message.get('content') or '', str):
            raise EndpointError("malformed choice in response", {'model': self.model})
        return (message.get('content') or '').strip()


class OpenAICompatibleEmbeddingClient:
    """Embeddings against any OpenAI-compatible /embeddings endpoint."""

    def __init__(self, endpoint: EndpointConfig, api_key: Optional[str] = None,
                 session: Optional[requests.Session] = None):
        self.endpoint = endpoint
        self.embedder_id = endpoint.model
        self.api_key = api_key
        self.session = session or requests.Session()
        self.url = endpoint.base_url.rstrip('/') + '/embeddings'

    def embed(self, texts: Sequence[str]) -> List[List[float]]:
        if not texts:
            return []
        payload = {'model': self.embedder_id, 'input': list(texts)}
        data = post_json(self.session, self.url, payload, self.api_key, self.endpoint.timeout)
        rows = data.get('data') if isinstance(data, dict) else None
        if not isinstance(rows, list) or not all(
            isinstance(row, dict) and isinstance(row.get('embedding'), list) for row in rows
        ):
            raise EmbeddingError("malformed embeddings response", {'model': self.embedder_id})
        if len(rows) != len(texts):
            raise EmbeddingError(
                f"expected {len(texts)} embeddings, got {len(rows)}", {'model': self.embedder_id}
            )
        rows = sorted(rows, key=lambda row: row.get('index', 0))
        try:
            return [[float(x) for x in row['embedding']] for row in rows]
        except (TypeError, ValueError) as e:
            raise EmbeddingError(f"non-numeric embedding: {e}", {'model': self.embedder_id}) from e


class StubEmbeddingClient:
    """
    Feature-hashing embedder: every word adds +/-1 to one of `dim` buckets.

    Identical texts get identical vectors; no vector is ever all zeros.
    """

    def __init__(self, dim: int = 64):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = dim
        self.embedder_id = f"stub-hash-{dim}"

    def _vector(self, text: str) -> List[float]:
        vector = [0.0] * self.dim
        for token in words(text) or [EMPTY_TEXT_TOKEN]:
            digest = hashlib.blake2b(token.encode('utf-8'), digest_size=8).digest()
            bucket = int.from_bytes(digest[:4], 'big') % self.dim
            vector[bucket] += 1.0 if digest[4] & 1 else -1.0
        if not any(vector):
            vector[0] = 1.0
        return vector

    def embed(self, texts: Sequence[str]) -> List[List[float]]:
        return [self._vector(t) for t in texts]


def split_prompt(prompt: str) -> Tuple[str, List[str]]:
    """
    Split `prefix\\nquestion\\n\\ncontext` into the question and context lines.

    A prompt without the prefix line is a bare question with no context.
    """
    header, _, body = prompt.partition('\n')
    if header != PROMPT_PREFIX:
        return prompt.strip(), []
    question, _, context = body.partition('\n\n')
    return question.strip(), [line for line in context.split('\n') if line.strip()]


class StubChatClient:
    """
    Deterministic stand-in for a chat model.

    Answers with the context lines sharing the most content words with the
    question (ties keep context order), at most five, in context order.
    """

    model = STUB_CHAT_MODEL

    def __init__(self, max_lines: int = STUB_MAX_LINES):
        self.max_lines = max_lines

    def complete(self, prompt: str) -> str:
        question, context = split_prompt(prompt)
        if not context:
            return "I don't know."

        wanted = set(words(question)) - STOPWORDS
        scored = [(len(wanted & set(words(line))), i) for i, line in enumerate(context)]
        best = sorted(scored, key=lambda item: (-item[0], item[1]))[:self.max_lines]
        chosen = sorted(i for score, i in best)
        return "\n".join(context[i] for i in chosen)


def make_clients(config: Config, session: Optional[requests.Session] = None):
    """
    Build (chat, retrieval embedder, evaluation embedder) for a config.

    Stub mode needs no endpoints or keys.
    """
    if config.stub:
        logger.info("Using stub model clients")
        return StubChatClient(), StubEmbeddingClient(), StubEmbeddingClient()

    def _key(endpoint: EndpointConfig) -> str:
        key = endpoint.api_key()
        if not key:
            raise ConfigurationError(
                f"environment variable {endpoint.api_key_env} is not set", {'model': endpoint.model}
            )
        return key

    return (
        OpenAICompatibleChatClient(config.chat, _key(config.chat), session),
        OpenAICompatibleEmbeddingClient(config.retrieval_embedder, _key(config.retrieval_embedder), session),
        OpenAICompatibleEmbeddingClient(config.eval_embedder, _key(config.eval_embedder), session),
    )
