"""
Tests for chunking and the vector store.
"""
import json
import math
import random

import pytest

from src.common.errors import (
    EmbedderMismatchError,
    EmbeddingDimensionError,
    EmbeddingError,
    EmptyCorpusError,
    EmptyStoreError,
    StoreFormatError,
    TransientEndpointError,
)
from src.extract.article_fetch import ArticleText
from src.llm.clients import StubEmbeddingClient
from src.retrieval.chunking import Chunk, chunk_text
from src.retrieval.vector_store import (
    StoreEntry,
    VectorStore,
    build_store,
    load_store,
    nearest_chunks,
    save_store,
    store_to_bytes,
)


def doc(url: str, body: str) -> ArticleText:
    return ArticleText(url, body, 'ok', "1970-01-01T00:00:00Z")


class ScriptedEmbedder:
    """Embedder whose per-call behaviour is scripted: a vector length, or an exception."""

    def __init__(self, script, embedder_id="scripted"):
        self.script = list(script)
        self.embedder_id = embedder_id
        self.calls = 0

    def embed(self, texts):
        step = self.script[min(self.calls, len(self.script) - 1)]
        self.calls += 1
        if isinstance(step, Exception):
            raise step
        return [[float(len(t)), 1.0] + [0.0] * (step - 2) for t in texts]


# -- chunking ---------------------------------------------------------------------------

def test_chunks_pack_greedily():
    chunks = chunk_text(doc("u", "one two three four five six seven"), max_tokens=3)
    assert [c.text for c in chunks] == ["one two three", "four five six", "seven"]
    assert [c.chunk_index for c in chunks] == [0, 1, 2]
    assert [c.token_count for c in chunks] == [3, 3, 1]


@pytest.mark.parametrize("max_tokens", [1, 2, 5, 500])
def test_chunks_cover_every_token(max_tokens):
    body = " ".join(f"w{i}" for i in range(37))
    chunks = chunk_text(doc("u", body), max_tokens)
    assert " ".join(c.text for c in chunks).split() == body.split()
    assert all(c.token_count <= max_tokens for c in chunks)
    assert all(c.token_count == max_tokens for c in chunks[:-1])


def test_empty_body_has_no_chunks():
    assert chunk_text(doc("u", "   \n "), 10) == []


def test_chunk_size_must_be_positive():
    with pytest.raises(ValueError):
        chunk_text(doc("u", "a b"), 0)


def test_custom_tokenizer():
    chunks = chunk_text(doc("u", "a,b,c"), 2, tokenizer=lambda text: text.split(','))
    assert [c.text for c in chunks] == ["a b", "c"]


# -- building ---------------------------------------------------------------------------

def test_store_entries_in_document_order(store, corpus):
    keys = [e.chunk.sort_key() for e in store.entries]
    assert keys == sorted(keys)
    assert {k[0] for k in keys} == {t.document_identifier for t in corpus}
    assert store.embedder_id == "stub-hash-64"
    assert store.dim == 64
    assert not store.failed


def test_build_requires_text():
    with pytest.raises(EmptyCorpusError):
        build_store([doc("u", "")], StubEmbeddingClient())


def test_transient_failures_are_retried():
    embedder = ScriptedEmbedder([TransientEndpointError("HTTP 503"), 4])
    store = build_store([doc("u", "a b c")], embedder, retries=2, backoff=0.0, max_workers=1)
    assert len(store) == 1
    assert embedder.calls == 2


def test_failed_batches_are_listed():
    embedder = ScriptedEmbedder([4, TransientEndpointError("HTTP 503")])
    docs = [doc("a", "x y"), doc("b", "z")]
    store = build_store(docs, embedder, chunk_tokens=5, batch_size=1, retries=0, max_workers=1, backoff=0.0)
    assert [e.chunk.document_identifier for e in store.entries] == ["a"]
    assert store.failed == [{'document_identifier': "b", 'chunk_index': 0, 'error': "HTTP 503"}]


def test_all_batches_failing_is_an_error():
    embedder = ScriptedEmbedder([TransientEndpointError("down")])
    with pytest.raises(EmbeddingError):
        build_store([doc("u", "a")], embedder, retries=0, backoff=0.0)


def test_dimension_change_is_an_error():
    embedder = ScriptedEmbedder([4, 5])
    docs = [doc("a", "x"), doc("b", "y")]
    with pytest.raises(EmbeddingDimensionError):
        build_store(docs, embedder, batch_size=1, max_workers=1)


# -- search -----------------------------------------------------------------------------

def brute_force(store, query_vector, k):
    scored = [
        (math.dist(e.vector, query_vector), e.chunk.sort_key(), e.chunk)
        for e in store.entries
    ]
    scored.sort(key=lambda item: (item[0], item[1]))
    return [(chunk, dist) for dist, _, chunk in scored[:k]]


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_nearest_matches_brute_force(store, seed):
    rng = random.Random(seed)
    words = " ".join(e.chunk.text for e in store.entries).split()
    query = " ".join(rng.choice(words) for _ in range(6))
    embedder = StubEmbeddingClient()
    k = rng.randint(1, len(store) + 2)

    ranked = nearest_chunks(store, query, k, embedder)
    expected = brute_force(store, embedder.embed([query])[0], k)
    assert [c.sort_key() for c, _ in ranked] == [c.sort_key() for c, _ in expected]
    assert [d for _, d in ranked] == pytest.approx([d for _, d in expected])
    assert len(ranked) == min(k, len(store))


def test_ties_break_by_document_and_index():
    chunks = [Chunk("b", 0, "t", 1), Chunk("a", 1, "t", 1), Chunk("a", 0, "t", 1)]
    embedder = StubEmbeddingClient(dim=4)
    vector = embedder.embed(["t"])[0]
    store = VectorStore(embedder.embedder_id, 4, [StoreEntry(c, list(vector)) for c in chunks])
    ranked = nearest_chunks(store, "t", 3, embedder)
    assert [c.sort_key() for c, _ in ranked] == [("a", 0), ("a", 1), ("b", 0)]
    assert all(d == 0.0 for _, d in ranked)


class FixedEmbedder:
    """Returns the same query vector for any text."""

    def __init__(self, vector, embedder_id="fixed"):
        self.vector = [float(x) for x in vector]
        self.embedder_id = embedder_id

    def embed(self, texts):
        return [list(self.vector) for _ in texts]


def random_store(rng) -> VectorStore:
    # small integer coordinates keep equal distances exactly equal
    dim = rng.randint(1, 64)
    entries = [
        StoreEntry(Chunk(f"https://doc{rng.randint(0, 9)}.example.com/", i, f"chunk {i}", 2),
                   [float(rng.randint(-5, 5)) for _ in range(dim)])
        for i in range(rng.randint(1, 500))
    ]
    return VectorStore("fixed", dim, entries)


@pytest.mark.parametrize("seed", range(10))
def test_nearest_matches_exact_ranking_on_random_stores(seed):
    rng = random.Random(seed)
    for _ in range(20):
        store = random_store(rng)
        query = [rng.randint(-5, 5) for _ in range(store.dim)]
        k = rng.randint(1, len(store) + 5)

        ranked = nearest_chunks(store, "any text", k, FixedEmbedder(query))
        squared = [
            (sum((int(x) - q) ** 2 for x, q in zip(e.vector, query)), e.chunk.sort_key())
            for e in store.entries
        ]
        expected = sorted(squared)[:k]
        assert len(ranked) == min(k, len(store))
        assert [c.sort_key() for c, _ in ranked] == [key for _, key in expected]
        assert [d for _, d in ranked] == pytest.approx([math.sqrt(s) for s, _ in expected])


def test_nearest_three_four_five():
    store = VectorStore("fixed", 2, [
        StoreEntry(Chunk("https://a.example.com/", 0, "origin", 1), [0.0, 0.0]),
        StoreEntry(Chunk("https://b.example.com/", 0, "far", 1), [3.0, 4.0]),
    ])
    embedder = FixedEmbedder([0, 0])

    assert [(c.text, d) for c, d in nearest_chunks(store, "q", 1, embedder)] == [("origin", 0.0)]
    assert [(c.text, d) for c, d in nearest_chunks(store, "q", 2, embedder)] == [("origin", 0.0), ("far", 5.0)]


def test_search_errors(store):
    embedder = StubEmbeddingClient()
    with pytest.raises(ValueError):
        nearest_chunks(store, "q", 0, embedder)
    with pytest.raises(EmptyStoreError):
        nearest_chunks(VectorStore(embedder.embedder_id, 64, []), "q", 1, embedder)
    with pytest.raises(EmbedderMismatchError):
        nearest_chunks(store, "q", 1, StubEmbeddingClient(dim=8))


def test_store_dim_is_enforced():
    with pytest.raises(EmbeddingDimensionError):
        VectorStore("x", 3, [StoreEntry(Chunk("u", 0, "t", 1), [1.0, 2.0])])


# -- persistence ------------------------------------------------------------------------

def test_store_round_trip(store, tmp_path):
    path = save_store(store, tmp_path / "store.json")
    loaded = load_store(path, expected_embedder="stub-hash-64")
    assert [e.chunk for e in loaded.entries] == [e.chunk for e in store.entries]
    assert store_to_bytes(loaded) == store_to_bytes(store)


def test_load_store_checks_embedder(store, tmp_path):
    path = save_store(store, tmp_path / "store.json")
    with pytest.raises(EmbedderMismatchError):
        load_store(path, expected_embedder="E5-large-v2")


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(format="something-else"),
    lambda d: d.update(schema_version=2),
    lambda d: d['entries'][0].pop('vector'),
])
def test_load_store_rejects_bad_documents(store, tmp_path, mutate):
    document = json.loads(store_to_bytes(store))
    mutate(document)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(document), encoding='utf-8')
    with pytest.raises(StoreFormatError):
        load_store(path)


def test_load_store_rejects_garbage(tmp_path):
    path = tmp_path / "garbage.json"
    path.write_text("{not json", encoding='utf-8')
    with pytest.raises(StoreFormatError):
        load_store(path)
    with pytest.raises(FileNotFoundError):
        load_store(tmp_path / "missing.json")
