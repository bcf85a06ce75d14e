import json

import pytest

from ragforge.chunking import Chunk, ChunkStore
from ragforge.errors import (
    BackendUnavailable,
    BudgetTooSmall,
    EmptyText,
    MalformedResponse,
    Timeout,
    UnresolvedChunkId,
)
from ragforge.pipeline import (
    QLORA_FINETUNE_METADATA,
    BackendDescriptor,
    ChatBackendClient,
    ModelConfiguration,
    PipelineResources,
    RetrievalResult,
    RetrievalSettings,
    answer,
    assemble_prompt,
    build_messages,
    generate,
    prompt_hash_of,
    render_user_message,
    request_body,
    retrieve,
)
from ragforge.testing import ChatRule, MockChatServer


def backend_for(server: MockChatServer, **overrides) -> BackendDescriptor:
    fields = dict(name="mock", endpoint=server.url, model_id="mock-model", temperature=0.0)
    fields.update(overrides)
    return BackendDescriptor(**fields)


def fast_client(backend: BackendDescriptor, timeout_s: float = 10.0) -> ChatBackendClient:
    return ChatBackendClient(backend, timeout_s=timeout_s, backoff_base_s=0.0)


class CountingIndex:
    """Index wrapper used to assert how many searches a run performed."""

    def __init__(self, inner):
        self.inner = inner
        self.searches = 0

    def search(self, query, k, **kwargs):
        self.searches += 1
        return self.inner.search(query, k, **kwargs)


class TestRetrieve:
    def test_exact_text_ranks_first(self, tiny_corpus, hashed_embedder):
        index, store, _, chunks = tiny_corpus
        result = retrieve(chunks[0].text, index, hashed_embedder, 3, store)
        assert result.hits[0].chunk_id == chunks[0].chunk_id
        assert result.hits[0].score == pytest.approx(1.0, abs=1e-5)
        assert result.chunks[0].text == chunks[0].text

    def test_k_larger_than_corpus(self, tiny_corpus, hashed_embedder):
        index, store, _, chunks = tiny_corpus
        result = retrieve("layer height", index, hashed_embedder, 50, store)
        assert len(result.hits) == len(chunks)

    def test_unresolved_chunk_id(self, tiny_corpus, hashed_embedder):
        index, _, _, chunks = tiny_corpus
        broken_store = ChunkStore(chunks[:1])  # other ids indexed but absent
        with pytest.raises(UnresolvedChunkId):
            retrieve("resin curing exposure", index, hashed_embedder, 3, broken_store)

    def test_empty_query(self, tiny_corpus, hashed_embedder):
        index, store, _, _ = tiny_corpus
        with pytest.raises(EmptyText):
            retrieve("  ", index, hashed_embedder, 3, store)


def hundred_token_chunk(cid: str, word: str) -> Chunk:
    text = " ".join(f"{word}{i}" for i in range(100))
    return Chunk(cid, cid.split("#")[0], 0, 0, 100, text)


class TestAssemblePrompt:
    def fixture_retrieval(self):
        chunks = [
            hundred_token_chunk("d1#0", "alpha"),
            hundred_token_chunk("d2#0", "beta"),
            hundred_token_chunk("d3#0", "gamma"),
        ]
        hits = [type("H", (), {"chunk_id": c.chunk_id, "score": 1.0 - i / 10})() for i, c in enumerate(chunks)]
        return RetrievalResult("what about alpha?", hits, chunks)

    def test_greedy_budget_250_takes_two(self):
        bundle = assemble_prompt("q", self.fixture_retrieval(), budget=250)
        assert [b.chunk_id for b in bundle.context_blocks] == ["d1#0", "d2#0"]

    def test_budget_covers_all(self):
        bundle = assemble_prompt("q", self.fixture_retrieval(), budget=300)
        assert [b.chunk_id for b in bundle.context_blocks] == ["d1#0", "d2#0", "d3#0"]

    def test_budget_too_small(self):
        with pytest.raises(BudgetTooSmall):
            assemble_prompt("q", self.fixture_retrieval(), budget=50)

    def test_question_comes_last_and_blocks_attributed(self):
        bundle = assemble_prompt(
            "what about alpha?",
            self.fixture_retrieval(),
            budget=300,
            doc_titles={"d1": "Alpha Handbook"},
        )
        rendered = render_user_message(bundle)
        assert rendered.rstrip().endswith("Question: what about alpha?")
        assert "[source: Alpha Handbook | d1#0]" in rendered
        # untitled docs fall back to doc_id
        assert "[source: d2 | d2#0]" in rendered

    def test_estimated_tokens_bounded(self):
        retrieval = self.fixture_retrieval()
        bundle = assemble_prompt("q", retrieval, budget=250)
        overhead = bundle.estimated_tokens - 200  # two 100-token chunks included
        assert overhead > 0
        assert bundle.estimated_tokens <= 250 + overhead


class TestGenerate:
    def test_echo_mock_returns_question(self):
        with MockChatServer() as server:
            backend = backend_for(server)
            text = generate(backend, "what nozzle temperature for ABS?", client=fast_client(backend))
            assert text.endswith("what nozzle temperature for ABS?")

    def test_scripted_reply(self):
        with MockChatServer([ChatRule(contains="nozzle", reply="Use 240C.")]) as server:
            backend = backend_for(server)
            assert generate(backend, "nozzle temp?", client=fast_client(backend)) == "Use 240C."

    def test_500_twice_exhausts_single_retry(self):
        with MockChatServer([ChatRule(contains="", status=500, times=2)]) as server:
            backend = backend_for(server)
            with pytest.raises(BackendUnavailable) as err:
                generate(backend, "anything", client=fast_client(backend))
            assert err.value.status == 500
            assert len(server.requests) == 2

    def test_500_once_recovers_on_retry(self):
        with MockChatServer([ChatRule(contains="", status=500, times=1)]) as server:
            backend = backend_for(server)
            text = generate(backend, "flaky question", client=fast_client(backend))
            assert "flaky question" in text
            assert len(server.requests) == 2

    def test_404_is_not_retried(self):
        with MockChatServer([ChatRule(contains="", status=404)]) as server:
            backend = backend_for(server)
            with pytest.raises(BackendUnavailable):
                generate(backend, "q", client=fast_client(backend))
            assert len(server.requests) == 1

    def test_timeout(self):
        with MockChatServer([ChatRule(contains="", delay_s=0.6)]) as server:
            backend = backend_for(server)
            with pytest.raises(Timeout):
                generate(backend, "slow", client=fast_client(backend, timeout_s=0.15))

    def test_malformed_response(self):
        with MockChatServer([ChatRule(contains="", raw_body='{"weird": true}')]) as server:
            backend = backend_for(server)
            with pytest.raises(MalformedResponse):
                generate(backend, "q", client=fast_client(backend))

    def test_connection_refused(self):
        backend = BackendDescriptor(
            name="dead", endpoint="http://127.0.0.1:9/unreachable", model_id="x"
        )
        with pytest.raises(BackendUnavailable):
            generate(backend, "q", client=fast_client(backend, timeout_s=0.5))

    def test_bearer_token_from_env(self, monkeypatch):
        monkeypatch.setenv("RAGFORGE_API_KEY", "sekrit")
        with MockChatServer() as server:
            backend = backend_for(server)
            generate(backend, "authorized?", client=fast_client(backend))
            assert server.requests[0].headers.get("Authorization") == "Bearer sekrit"

    def test_wire_shape(self):
        with MockChatServer() as server:
            backend = backend_for(server, temperature=0.25, max_output_tokens=99)
            generate(backend, "shape check", client=fast_client(backend))
            body = server.requests[0].body
            assert body["model"] == "mock-model"
            assert body["temperature"] == 0.25
            assert body["max_tokens"] == 99
            assert [m["role"] for m in body["messages"]] == ["system", "user"]


class TestAnswer:
    def test_baseline_has_no_retrievals(self, tiny_corpus, hashed_embedder):
        index, store, titles, _ = tiny_corpus
        counting = CountingIndex(index)
        resources = PipelineResources(counting, hashed_embedder, store, titles)
        with MockChatServer() as server:
            config = ModelConfiguration("baseline", "baseline", backend_for(server))
            record = answer(config, "what layer height?", resources,
                            client=fast_client(config.backend))
        assert record.retrieved_chunk_ids == []
        assert counting.searches == 0

    def test_rag_k5_over_3_chunk_corpus(self, tiny_corpus, hashed_embedder):
        index, store, titles, chunks = tiny_corpus
        resources = PipelineResources(index, hashed_embedder, store, titles)
        with MockChatServer() as server:
            config = ModelConfiguration(
                "rag", "rag", backend_for(server), RetrievalSettings(k=5, context_budget=3072)
            )
            record = answer(config, "what layer height?", resources,
                            client=fast_client(config.backend))
        assert len(record.retrieved_chunk_ids) == 3

    def test_rag_prompt_contains_chunk_texts(self, tiny_corpus, hashed_embedder):
        index, store, titles, chunks = tiny_corpus
        resources = PipelineResources(index, hashed_embedder, store, titles)
        with MockChatServer() as server:
            config = ModelConfiguration(
                "rag", "rag", backend_for(server), RetrievalSettings(k=3, context_budget=3072)
            )
            answer(config, "what layer height?", resources, client=fast_client(config.backend))
            body_text = server.requests[0].raw
            for chunk in chunks:
                assert chunk.text in json.loads(body_text)["messages"][1]["content"]

    def test_rag_with_broken_store_persists_nothing(self, tiny_corpus, hashed_embedder):
        index, _, titles, chunks = tiny_corpus
        resources = PipelineResources(index, hashed_embedder, ChunkStore(chunks[:1]), titles)
        with MockChatServer() as server:
            config = ModelConfiguration(
                "rag", "rag", backend_for(server), RetrievalSettings(k=3)
            )
            with pytest.raises(UnresolvedChunkId):
                answer(config, "resin curing exposure", resources,
                       client=fast_client(config.backend))
            assert server.requests == []  # generation never reached

    def test_empty_question(self, tiny_corpus, hashed_embedder):
        with MockChatServer() as server:
            config = ModelConfiguration("baseline", "baseline", backend_for(server))
            with pytest.raises(EmptyText):
                answer(config, " ", client=fast_client(config.backend))

    def test_determinism_modulo_timing(self, tiny_corpus, hashed_embedder):
        index, store, titles, _ = tiny_corpus
        resources = PipelineResources(index, hashed_embedder, store, titles)
        records = []
        for _ in range(2):
            with MockChatServer() as server:
                config = ModelConfiguration(
                    "rag", "rag", backend_for(server), RetrievalSettings(k=2)
                )
                records.append(
                    answer(config, "what layer height?", resources,
                           client=fast_client(config.backend))
                )
        a, b = records
        assert a.answer_text == b.answer_text
        assert a.retrieved_chunk_ids == b.retrieved_chunk_ids
        assert a.prompt_hash == b.prompt_hash


class TestPromptHash:
    def test_equal_prompts_hash_equal(self):
        backend = BackendDescriptor(name="b", endpoint="http://x", model_id="m")
        body1 = request_body(backend, build_messages("same question"))
        body2 = request_body(backend, build_messages("same question"))
        assert prompt_hash_of(body1) == prompt_hash_of(body2)

    def test_different_prompts_hash_differently(self):
        backend = BackendDescriptor(name="b", endpoint="http://x", model_id="m")
        hashes = {
            prompt_hash_of(request_body(backend, build_messages(q)))
            for q in ("q one", "q two", "q three", "q four")
        }
        assert len(hashes) == 4


class TestTrainingMetadata:
    def test_canonical_values(self):
        meta = QLORA_FINETUNE_METADATA
        assert meta.epochs == 9
        assert meta.batch_size == 8
        assert meta.learning_rate == 1e-6
        assert meta.optimizer_name == "AdamW"
        assert meta.early_stopping is True
        assert "4-bit" in meta.quantization_note

    def test_attached_to_backend_but_inert(self):
        backend = BackendDescriptor(
            name="ft", endpoint="http://x", model_id="m", training_metadata=QLORA_FINETUNE_METADATA
        )
        body = request_body(backend, build_messages("q"))
        assert "training" not in json.dumps(body)


class TestModelConfiguration:
    def test_rag_requires_retrieval_defaults_in(self):
        backend = BackendDescriptor(name="b", endpoint="http://x", model_id="m")
        config = ModelConfiguration("r", "rag", backend)
        assert config.retrieval is not None
        assert config.retrieval.k == 5
        assert config.retrieval.context_budget == 3072

    def test_unknown_mode_rejected(self):
        backend = BackendDescriptor(name="b", endpoint="http://x", model_id="m")
        with pytest.raises(ValueError):
            ModelConfiguration("x", "zero-shot", backend)
