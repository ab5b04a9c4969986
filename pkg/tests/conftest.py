"""
Shared fixtures: the bundled Baltimore sample, stage outputs built from it and
a fake requests session so nothing touches the network.
"""
import json
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import pytest
import requests

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.common.config import PROJECT_ROOT, load_config
from src.common.state_store import Clock
from src.extract.article_fetch import FetchPolicy, fetch_corpus
from src.extract.gdelt_tables import parse_tables
from src.graph.builder import build_dkg, load_facts
from src.llm.clients import StubChatClient, StubEmbeddingClient
from src.load.corpus_store import load_corpus
from src.qa.pipeline import Resources
from src.retrieval.vector_store import build_store
from src.transform.subset_filter import KeywordFilter, filter_subset

SAMPLE_DIR = PROJECT_ROOT / "data" / "sample"

A1 = "https://www.cnn.com/2024/03/26/us/baltimore-bridge-collapse/index.html"
A2 = "https://www.cnn.com/2024/03/26/us/dali-ship-baltimore/index.html"
A3 = "https://www.wbaltv.com/article/key-bridge-collapse/"
NOISE_URL = "https://www.example.com/sports/cricket-final"

SAMPLE_KEYWORDS = ['Baltimore', 'bridge', 'collapse', 'ship']


# -- fake HTTP ------------------------------------------------------------------

class FakeResponse:
    def __init__(self, status_code: int = 200, body: bytes = b"", headers: Optional[Dict[str, str]] = None,
                 url: str = "", payload: Any = None):
        self.status_code = status_code
        self.content = body if payload is None else json.dumps(payload).encode('utf-8')
        self.headers = headers or {}
        self.url = url
        self.encoding = 'utf-8'
        self.closed = False

    @property
    def text(self) -> str:
        return self.content.decode('utf-8', errors='replace')

    def json(self) -> Any:
        return json.loads(self.content.decode('utf-8'))

    def iter_content(self, chunk_size: int = 65536):
        for start in range(0, len(self.content), chunk_size):
            yield self.content[start:start + chunk_size]

    def raise_for_status(self) -> None:
        if self.status_code >= 400:
            raise requests.HTTPError(f"HTTP {self.status_code}")

    def close(self) -> None:
        self.closed = True


class FakeSession:
    """
    Scripted stand-in for requests.Session.

    ``routes`` maps URL -> FakeResponse, exception instance, or a list of
    those consumed one per call (the last one repeats).
    """

    def __init__(self, routes: Optional[Dict[str, Any]] = None):
        self.routes = dict(routes or {})
        self.calls: List[Dict[str, Any]] = []
        self.max_redirects = 30

    def _next(self, url: str):
        outcome = self.routes.get(url)
        if isinstance(outcome, list):
            outcome = outcome.pop(0) if len(outcome) > 1 else outcome[0]
        if outcome is None:
            return FakeResponse(404, b"not found", url=url)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome

    def get(self, url: str, **kwargs):
        self.calls.append({'method': 'GET', 'url': url, **kwargs})
        return self._next(url)

    def post(self, url: str, **kwargs):
        self.calls.append({'method': 'POST', 'url': url, **kwargs})
        return self._next(url)

    def close(self) -> None:
        pass


@pytest.fixture
def fake_session():
    return FakeSession()


# -- sample data ----------------------------------------------------------------

@pytest.fixture(scope="session")
def sample_paths() -> Dict[str, Path]:
    return {
        'events': SAMPLE_DIR / "events.export.CSV",
        'mentions': SAMPLE_DIR / "events.mentions.CSV",
        'gkg': SAMPLE_DIR / "20240326.gkg.csv",
        'fixtures': SAMPLE_DIR / "html",
        'facts': SAMPLE_DIR / "facts.yaml",
    }


@pytest.fixture(scope="session")
def parsed(sample_paths):
    return parse_tables([sample_paths['events']], [sample_paths['mentions']], [sample_paths['gkg']])


@pytest.fixture(scope="session")
def subset(parsed):
    return filter_subset(
        parsed.events.records, parsed.mentions.records, parsed.articles.records,
        KeywordFilter(SAMPLE_KEYWORDS),
    )


@pytest.fixture(scope="session")
def kg(subset, sample_paths):
    return build_dkg(subset, facts=load_facts(sample_paths['facts']))


@pytest.fixture(scope="session")
def corpus_dir(subset, sample_paths, tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("corpus")
    policy = FetchPolicy(fixtures_dir=sample_paths['fixtures'], offline=True, min_interval=0.0)
    fetch_corpus([a.document_identifier for a in subset.articles], policy, out, clock=Clock(frozen=True))
    return out


@pytest.fixture(scope="session")
def corpus(corpus_dir):
    return load_corpus(corpus_dir)


@pytest.fixture(scope="session")
def store(corpus):
    return build_store(corpus, StubEmbeddingClient(), chunk_tokens=40, batch_size=4, max_workers=2)


@pytest.fixture
def stub_resources(kg, store) -> Resources:
    return Resources(chat=StubChatClient(), kg=kg, store=store, embedder=StubEmbeddingClient(),
                     k=5, max_sentences=500, max_chunks=20, retries=0, backoff=0.0)


@pytest.fixture
def stub_config():
    return load_config(env={}, overrides={'stub': True})
