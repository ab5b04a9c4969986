"""
Tests for the model clients (live clients run against a fake session).
"""
import pytest
import requests

from src.common.config import EndpointConfig, load_config
from src.common.errors import ConfigurationError, EmbeddingError, EndpointError, TransientEndpointError
from src.llm.clients import (
    OpenAICompatibleChatClient,
    OpenAICompatibleEmbeddingClient,
    StubChatClient,
    StubEmbeddingClient,
    make_clients,
    split_prompt,
    with_retries,
)
from src.qa.prompts import render_prompt
from tests.conftest import FakeResponse, FakeSession

CHAT_URL = "http://llm.local/v1/chat/completions"
EMBED_URL = "http://embed.local/v1/embeddings"


def chat_client(outcome) -> OpenAICompatibleChatClient:
    endpoint = EndpointConfig(base_url="http://llm.local/v1/", model="Mistral-7B", max_output_tokens=64)
    return OpenAICompatibleChatClient(endpoint, "secret", FakeSession({CHAT_URL: outcome}))


def embed_client(outcome) -> OpenAICompatibleEmbeddingClient:
    endpoint = EndpointConfig(base_url="http://embed.local/v1", model="E5-large-v2")
    return OpenAICompatibleEmbeddingClient(endpoint, None, FakeSession({EMBED_URL: outcome}))


# -- live clients -----------------------------------------------------------------------

def test_chat_request_and_response():
    client = chat_client(FakeResponse(200, payload={'choices': [{'message': {'content': "  The Dali. "}}]}))
    assert client.complete("Which ship?") == "The Dali."

    call = client.session.calls[0]
    assert call['url'] == CHAT_URL
    assert call['json'] == {
        'model': "Mistral-7B",
        'messages': [{'role': 'user', 'content': "Which ship?"}],
        'temperature': 0.0,
        'max_tokens': 64,
    }
    assert call['headers']['Authorization'] == "Bearer secret"


@pytest.mark.parametrize("outcome,error", [
    (FakeResponse(429, b"slow down"), TransientEndpointError),
    (FakeResponse(502, b"bad gateway"), TransientEndpointError),
    (requests.Timeout("read timed out"), TransientEndpointError),
    (requests.ConnectionError("refused"), TransientEndpointError),
    (FakeResponse(400, b"bad request"), EndpointError),
    (FakeResponse(200, b"<html>"), EndpointError),
    (FakeResponse(200, payload={'choices': []}), EndpointError),
    (FakeResponse(200, payload=[{'choices': []}]), EndpointError),
    (FakeResponse(200, payload={'choices': ["x"]}), EndpointError),
    (FakeResponse(200, payload={'choices': [{'message': "The Dali"}]}), EndpointError),
    (FakeResponse(200, payload={'choices': [{'message': {'content': 5}}]}), EndpointError),
])
def test_chat_failures_map_to_endpoint_errors(outcome, error):
    with pytest.raises(error):
        chat_client(outcome).complete("q")


def test_client_error_is_not_transient():
    with pytest.raises(EndpointError) as info:
        chat_client(FakeResponse(401, b"no")).complete("q")
    assert not isinstance(info.value, TransientEndpointError)


def test_embeddings_sorted_by_index():
    payload = {'data': [{'index': 1, 'embedding': [0, 1]}, {'index': 0, 'embedding': [1, 0]}]}
    client = embed_client(FakeResponse(200, payload=payload))
    assert client.embed(["a", "b"]) == [[1.0, 0.0], [0.0, 1.0]]
    assert 'Authorization' not in client.session.calls[0]['headers']
    assert client.embed([]) == []


def test_embedding_count_mismatch():
    client = embed_client(FakeResponse(200, payload={'data': [{'index': 0, 'embedding': [1]}]}))
    with pytest.raises(EmbeddingError):
        client.embed(["a", "b"])


@pytest.mark.parametrize("payload", [
    [[1.0, 0.0]],
    {'data': [{'index': 0}]},
    {'data': ["x"]},
    {'data': [{'index': 0, 'embedding': ["a"]}]},
])
def test_malformed_embeddings_response(payload):
    with pytest.raises(EmbeddingError):
        embed_client(FakeResponse(200, payload=payload)).embed(["a"])


def test_with_retries_recovers_then_gives_up():
    attempts = []

    def flaky():
        attempts.append(1)
        if len(attempts) < 3:
            raise TransientEndpointError("HTTP 503")
        return "ok"

    assert with_retries(flaky, retries=2, what="test", backoff=0.0) == "ok"

    attempts.clear()
    with pytest.raises(TransientEndpointError):
        with_retries(flaky, retries=1, what="test", backoff=0.0)
    assert len(attempts) == 2


def test_with_retries_does_not_retry_permanent_errors():
    attempts = []

    def broken():
        attempts.append(1)
        raise EndpointError("HTTP 400")

    with pytest.raises(EndpointError):
        with_retries(broken, retries=3, what="test", backoff=0.0)
    assert len(attempts) == 1


# -- stubs ------------------------------------------------------------------------------

def test_stub_embedder_is_deterministic_and_never_zero():
    embedder = StubEmbeddingClient()
    first, second, empty = embedder.embed(["Patapsco River", "Patapsco River", ""])
    assert first == second
    assert len(first) == 64
    assert any(empty)
    assert embedder.embed(["the the"]) != embedder.embed(["river"])


def test_split_prompt():
    question, context = split_prompt(render_prompt("Q?", "line one\n\nline two"))
    assert question == "Q?"
    assert context == ["line one", "line two"]
    assert split_prompt(render_prompt("Q?", "")) == ("Q?", [])


def test_split_prompt_keeps_multiline_questions_out_of_the_context():
    question, context = split_prompt(render_prompt("Which bridge?\nAnd which river?", "Patapsco River"))
    assert question == "Which bridge?\nAnd which river?"
    assert context == ["Patapsco River"]
    assert split_prompt("Who is Brandon Scott?\nMayor?") == ("Who is Brandon Scott?\nMayor?", [])


def test_stub_chat_picks_overlapping_lines_in_context_order():
    context = "\n".join([
        "alpha beta",
        "Patapsco River flows past the bridge",
        "gamma",
        "bridge over water",
    ])
    answer = StubChatClient(max_lines=2).complete(render_prompt("Which river is under the bridge?", context))
    assert answer == "Patapsco River flows past the bridge\nbridge over water"


def test_stub_chat_without_context_refuses():
    assert StubChatClient().complete(render_prompt("Who?", "")) == "I don't know."
    assert StubChatClient().complete("Who is Brandon Scott?") == "I don't know."


# -- factory ----------------------------------------------------------------------------

def test_make_clients_stub_mode(stub_config):
    chat, retrieval, evaluation = make_clients(stub_config)
    assert isinstance(chat, StubChatClient)
    assert retrieval.embedder_id == evaluation.embedder_id == "stub-hash-64"


def test_make_clients_live_needs_key(monkeypatch):
    monkeypatch.delenv("OPENAI_API_KEY", raising=False)
    config = load_config(env={})
    with pytest.raises(ConfigurationError):
        make_clients(config)


def test_make_clients_live(monkeypatch):
    monkeypatch.setenv("OPENAI_API_KEY", "k")
    chat, retrieval, evaluation = make_clients(load_config(env={}), session=FakeSession())
    assert chat.model == "Mistral-7B"
    assert retrieval.embedder_id == "E5-large-v2"
    assert evaluation.embedder_id == "sentence-transformers/all-MiniLM-L6-v2"
