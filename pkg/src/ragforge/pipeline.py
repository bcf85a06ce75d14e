"""Online inference: embed query, retrieve chunks, assemble prompt, generate.

Routes among the three model configurations (baseline, finetuned, rag); only
rag mode touches the index. Generation goes over a chat-completion wire
protocol to an external backend; model weights are never loaded in-process.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone

import requests

from .chunking import Chunk, ChunkStore, tokenize
from .embedding import Embedder
from .errors import (
    BackendUnavailable,
    BudgetTooSmall,
    EmptyText,
    MalformedResponse,
    Timeout,
    UnresolvedChunkId,
)
from .hashing import stable_hash64
from .vector_index.flat import SearchHit

logger = logging.getLogger(__name__)

MODES = ("baseline", "finetuned", "rag")
DEFAULT_K = 5
DEFAULT_CONTEXT_BUDGET = 3072
DEFAULT_TEMPLATE_ID = "grounded-v1"
PLAIN_TEMPLATE_ID = "plain-v1"
DEFAULT_TIMEOUT_S = 120.0
API_KEY_ENV = "RAGFORGE_API_KEY"


@dataclass(frozen=True)
class TrainingMetadata:
    """Descriptive record of how an external fine-tuned backend was trained.

    Never consumed by logic; carried for provenance in reports.
    """

    epochs: int
    batch_size: int
    learning_rate: float
    optimizer_name: str
    early_stopping: bool
    quantization_note: str


# Canonical hyperparameters of the externally fine-tuned backend.
QLORA_FINETUNE_METADATA = TrainingMetadata(
    epochs=9,
    batch_size=8,
    learning_rate=1e-6,
    optimizer_name="AdamW",
    early_stopping=True,
    quantization_note="4-bit quantization with LoRA adapters",
)


@dataclass(frozen=True)
class BackendDescriptor:
    name: str
    endpoint: str
    model_id: str
    temperature: float = 0.0
    max_output_tokens: int = 512
    training_metadata: TrainingMetadata | None = None


@dataclass(frozen=True)
class RetrievalSettings:
    k: int = DEFAULT_K
    context_budget: int = DEFAULT_CONTEXT_BUDGET
    prompt_template_id: str = DEFAULT_TEMPLATE_ID


@dataclass(frozen=True)
class ModelConfiguration:
    name: str
    mode: str  # baseline | finetuned | rag
    backend: BackendDescriptor
    retrieval: RetrievalSettings | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "rag" and self.retrieval is None:
            object.__setattr__(self, "retrieval", RetrievalSettings())


@dataclass
class RetrievalResult:
    query_text: str
    hits: list[SearchHit]
    chunks: list[Chunk]


@dataclass
class ContextBlock:
    chunk_id: str
    source_title: str
    text: str


@dataclass
class PromptBundle:
    system_text: str
    context_blocks: list[ContextBlock]
    question: str
    estimated_tokens: int
    template_id: str


@dataclass
class AnswerRecord:
    question_text: str
    config_name: str
    answer_text: str
    retrieved_chunk_ids: list[str]
    prompt_hash: int
    latency_ms: float
    created_at: str


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    system_text: str
    block_format: str  # placeholders: title, chunk_id, text
    question_format: str  # placeholder: question


PROMPT_TEMPLATES: dict[str, PromptTemplate] = {
    DEFAULT_TEMPLATE_ID: PromptTemplate(
        template_id=DEFAULT_TEMPLATE_ID,
        system_text=(
            "You are a technical assistant for additive manufacturing. "
            "Answer using only the provided context passages and name the "
            "sources you relied on. If the context does not contain the "
            "answer, say so."
        ),
        block_format="[source: {title} | {chunk_id}]\n{text}",
        question_format="Question: {question}",
    ),
    PLAIN_TEMPLATE_ID: PromptTemplate(
        template_id=PLAIN_TEMPLATE_ID,
        system_text=(
            "You are a technical assistant for additive manufacturing. "
            "Answer the question from your own knowledge."
        ),
        block_format="",
        question_format="{question}",
    ),
}


@dataclass
class PipelineResources:
    """Everything a rag-mode configuration needs besides its backend."""

    index: object = None  # FlatIndex | HnswIndex | any object with .search()
    embedder: Embedder | None = None
    chunk_store: ChunkStore | None = None
    doc_titles: dict[str, str] = field(default_factory=dict)


def retrieve(query: str, index, embedder: Embedder, k: int, chunk_store: ChunkStore) -> RetrievalResult:
    """Embed the query, search the index, resolve hits to chunk records."""
    if not query.strip():
        raise EmptyText("cannot retrieve for empty query")
    vector = embedder.embed(query)
    hits = index.search(vector, k)
    chunks = []
    for hit in hits:
        chunk = chunk_store.get(hit.chunk_id)
        if chunk is None:
            raise UnresolvedChunkId(f"{hit.chunk_id} is indexed but missing from the chunk store")
        chunks.append(chunk)
    return RetrievalResult(query_text=query, hits=hits, chunks=chunks)


def assemble_prompt(
    query: str,
    retrieval: RetrievalResult,
    budget: int,
    template_id: str = DEFAULT_TEMPLATE_ID,
    doc_titles: dict[str, str] | None = None,
) -> PromptBundle:
    """Greedily include chunks in hit order until the next would exceed the
    token budget. Each block carries a source attribution line; the question
    comes last."""
    template = PROMPT_TEMPLATES[template_id]
    titles = doc_titles or {}
    blocks: list[ContextBlock] = []
    used = 0
    for chunk in retrieval.chunks:
        cost = len(tokenize(chunk.text))
        if used + cost > budget:
            break
        blocks.append(
            ContextBlock(
                chunk_id=chunk.chunk_id,
                source_title=titles.get(chunk.doc_id, chunk.doc_id),
                text=chunk.text,
            )
        )
        used += cost
    if retrieval.chunks and not blocks:
        raise BudgetTooSmall(
            f"budget of {budget} tokens cannot fit the first retrieved chunk "
            f"({len(tokenize(retrieval.chunks[0].text))} tokens)"
        )
    overhead = len(tokenize(template.system_text)) + len(tokenize(query)) + 8 * len(blocks)
    return PromptBundle(
        system_text=template.system_text,
        context_blocks=blocks,
        question=query,
        estimated_tokens=used + overhead,
        template_id=template_id,
    )


def render_user_message(bundle: PromptBundle) -> str:
    template = PROMPT_TEMPLATES[bundle.template_id]
    parts = []
    if bundle.context_blocks:
        parts.append("Context:")
        for block in bundle.context_blocks:
            parts.append(
                template.block_format.format(
                    title=block.source_title, chunk_id=block.chunk_id, text=block.text
                )
            )
        parts.append("")
    parts.append(template.question_format.format(question=bundle.question))
    return "\n\n".join(parts)


def build_messages(prompt: PromptBundle | str) -> list[dict[str, str]]:
    if isinstance(prompt, PromptBundle):
        system_text = prompt.system_text
        user_text = render_user_message(prompt)
    else:
        template = PROMPT_TEMPLATES[PLAIN_TEMPLATE_ID]
        system_text = template.system_text
        user_text = template.question_format.format(question=prompt)
    return [
        {"role": "system", "content": system_text},
        {"role": "user", "content": user_text},
    ]


def request_body(backend: BackendDescriptor, messages: list[dict[str, str]]) -> dict:
    return {
        "model": backend.model_id,
        "messages": messages,
        "temperature": backend.temperature,
        "max_tokens": backend.max_output_tokens,
    }


def prompt_hash_of(body: dict) -> int:
    return stable_hash64(json.dumps(body, sort_keys=True, ensure_ascii=False))


class ChatBackendClient:
    """Chat-completion HTTP client with one retry on transient failures."""

    def __init__(
        self,
        backend: BackendDescriptor,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        backoff_base_s: float = 0.25,
    ):
        self.backend = backend
        self.timeout_s = timeout_s
        self.backoff_base_s = backoff_base_s
        self._local = threading.local()

    def _session(self) -> requests.Session:
        if not hasattr(self._local, "session"):
            self._local.session = requests.Session()
        return self._local.session

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(API_KEY_ENV)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(self, body: dict) -> str:
        last: Exception | None = None
        for attempt in range(2):
            if attempt:
                time.sleep(self.backoff_base_s * (2 ** (attempt - 1)))
            try:
                resp = self._session().post(
                    self.backend.endpoint,
                    json=body,
                    headers=self._headers(),
                    timeout=self.timeout_s,
                )
            except requests.Timeout as exc:
                last = Timeout(f"backend did not answer within {self.timeout_s}s: {exc}")
                continue
            except requests.RequestException as exc:
                last = BackendUnavailable("connection", str(exc))
                continue
            if resp.status_code != 200:
                last = BackendUnavailable(resp.status_code, resp.text[:200])
                if resp.status_code < 500 and resp.status_code != 429:
                    break
                continue
            return _parse_completion(resp)
        raise last  # type: ignore[misc]


def _parse_completion(resp: requests.Response) -> str:
    try:
        payload = resp.json()
    except ValueError as exc:
        raise MalformedResponse(f"backend returned invalid JSON: {exc}") from exc
    try:
        content = payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"unexpected completion shape: {exc}") from exc
    if not isinstance(content, str):
        raise MalformedResponse("completion content is not a string")
    return content


def generate(
    backend: BackendDescriptor,
    prompt: PromptBundle | str,
    timeout_s: float = DEFAULT_TIMEOUT_S,
    client: ChatBackendClient | None = None,
) -> str:
    """Send the wire request for ``prompt`` and return the first candidate text."""
    messages = build_messages(prompt)
    body = request_body(backend, messages)
    if client is None:
        client = ChatBackendClient(backend, timeout_s=timeout_s)
    text = client.complete(body)
    logger.debug(
        "generate: backend=%s prompt_hash=%016x answer_chars=%d",
        backend.name,
        prompt_hash_of(body),
        len(text),
    )
    return text


@dataclass
class AnswerOutcome:
    record: AnswerRecord
    retrieval: RetrievalResult | None


def answer(
    config: ModelConfiguration,
    question: str,
    resources: PipelineResources | None = None,
    timeout_s: float = DEFAULT_TIMEOUT_S,
    client: ChatBackendClient | None = None,
) -> AnswerRecord:
    """Run one question through one configuration and return the full record."""
    return answer_full(config, question, resources, timeout_s, client).record


def answer_full(
    config: ModelConfiguration,
    question: str,
    resources: PipelineResources | None = None,
    timeout_s: float = DEFAULT_TIMEOUT_S,
    client: ChatBackendClient | None = None,
) -> AnswerOutcome:
    if not question.strip():
        raise EmptyText("question is empty")
    started = time.perf_counter()
    created_at = datetime.now(timezone.utc).isoformat()

    if config.mode == "rag":
        if resources is None or resources.index is None or resources.embedder is None or resources.chunk_store is None:
            raise ValueError(
                f"configuration {config.name!r} is rag mode but index/embedder/chunk store are not wired"
            )
        settings = config.retrieval or RetrievalSettings()
        retrieval = retrieve(
            question, resources.index, resources.embedder, settings.k, resources.chunk_store
        )
        bundle = assemble_prompt(
            question,
            retrieval,
            settings.context_budget,
            settings.prompt_template_id,
            resources.doc_titles,
        )
        prompt: PromptBundle | str = bundle
        retrieved_ids = [hit.chunk_id for hit in retrieval.hits]
    else:
        retrieval = None
        prompt = question
        retrieved_ids = []

    body = request_body(config.backend, build_messages(prompt))
    if client is None:
        client = ChatBackendClient(config.backend, timeout_s=timeout_s)
    answer_text = client.complete(body)
    latency_ms = (time.perf_counter() - started) * 1000.0
    record = AnswerRecord(
        question_text=question,
        config_name=config.name,
        answer_text=answer_text,
        retrieved_chunk_ids=retrieved_ids,
        prompt_hash=prompt_hash_of(body),
        latency_ms=latency_ms,
        created_at=created_at,
    )
    return AnswerOutcome(record=record, retrieval=retrieval)
