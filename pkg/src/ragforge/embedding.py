"""Text-to-unit-vector embedding with pluggable providers.

Two providers: a remote sentence-embedding HTTP service for production, and a
deterministic seeded hashed bag-of-words embedder for offline work and tests.
All vectors are stored L2-normalized, so cosine similarity is a plain float32
dot product.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import requests

from .chunking import tokenize
from .errors import DimensionMismatch, EmptyText, RemoteUnavailable
from .hashing import stable_hash64

DEFAULT_HASHED_DIM = 256
NORM_TOLERANCE = 1e-6
_RETRY_BACKOFF_S = 0.25
_MAX_INFLIGHT = 8


@dataclass
class EmbeddingVector:
    values: np.ndarray  # float32, unit L2 norm

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    @classmethod
    def from_raw(cls, raw: Sequence[float] | np.ndarray) -> "EmbeddingVector":
        """Validate and L2-normalize a raw vector."""
        arr = np.asarray(raw, dtype=np.float32)
        if arr.ndim != 1 or arr.shape[0] < 1:
            raise DimensionMismatch(f"expected a 1-D vector, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DimensionMismatch("vector contains NaN or Inf components")
        norm = float(np.linalg.norm(arr.astype(np.float64)))
        if norm == 0.0:
            raise DimensionMismatch("cannot normalize the zero vector")
        return cls((arr / np.float32(norm)).astype(np.float32))


@dataclass(frozen=True)
class EmbedderDescriptor:
    name: str
    dim: int
    kind: str  # "remote" | "hashed_local"
    endpoint: str | None = None
    seed: int = 0


def hashed_embed(text: str, dim: int = DEFAULT_HASHED_DIM, seed: int = 0) -> EmbeddingVector:
    """Deterministic signed bag-of-words embedding.

    Tokens (whitespace split, lowercased) are hashed with the seed to a bucket
    and a sign; signed counts are accumulated and L2-normalized. Invariant
    under token reordering. If signed counts cancel to the zero vector,
    bucket 0 is perturbed by +1 so normalization never divides by zero.
    """
    if dim < 2:
        raise DimensionMismatch(f"hashed embedding dim must be >= 2, got {dim}")
    tokens = tokenize(text.lower())
    if not tokens:
        raise EmptyText("cannot embed empty text")
    counts = np.zeros(dim, dtype=np.int64)
    for token in tokens:
        h = stable_hash64(token, seed=seed)
        bucket = h % dim
        sign = 1 if (h >> 63) & 1 == 0 else -1
        counts[bucket] += sign
    if not counts.any():
        counts[0] += 1
    return EmbeddingVector.from_raw(counts.astype(np.float32))


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Float32 dot product of two normalized vectors; exactly symmetric."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"dims differ: {a.dim} vs {b.dim}")
    return float(np.dot(a.values, b.values))


class RemoteEmbedder:
    """Client for the remote embedding wire protocol.

    POSTs ``{"inputs": [...]}`` and expects ``{"vectors": [[...], ...], "dim": N}``.
    One retry on transient failure (connection error, 5xx, 429) with
    exponential backoff. Thread-safe; in-flight requests are bounded.
    """

    def __init__(
        self,
        descriptor: EmbedderDescriptor,
        timeout_s: float = 30.0,
        backoff_base_s: float = _RETRY_BACKOFF_S,
        max_inflight: int = _MAX_INFLIGHT,
    ):
        if descriptor.kind != "remote" or not descriptor.endpoint:
            raise ValueError("RemoteEmbedder requires a remote descriptor with an endpoint")
        self.descriptor = descriptor
        self.timeout_s = timeout_s
        self.backoff_base_s = backoff_base_s
        self._gate = threading.Semaphore(max_inflight)
        self._local = threading.local()

    def _session(self) -> requests.Session:
        if not hasattr(self._local, "session"):
            self._local.session = requests.Session()
        return self._local.session

    def embed_many(self, texts: list[str]) -> list[EmbeddingVector]:
        payload = {"inputs": texts}
        body = self._post(payload)
        vectors = body.get("vectors")
        dim = body.get("dim")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise RemoteUnavailable("response", "vector count does not match input count")
        if dim != self.descriptor.dim:
            raise DimensionMismatch(
                f"remote returned dim {dim}, descriptor declares {self.descriptor.dim}"
            )
        out = []
        for vec in vectors:
            if len(vec) != self.descriptor.dim:
                raise DimensionMismatch(
                    f"remote vector length {len(vec)} != {self.descriptor.dim}"
                )
            out.append(EmbeddingVector.from_raw(vec))
        return out

    def _post(self, payload: dict) -> dict:
        last: Exception | None = None
        for attempt in range(2):
            if attempt:
                time.sleep(self.backoff_base_s * (2 ** (attempt - 1)))
            try:
                with self._gate:
                    resp = self._session().post(
                        self.descriptor.endpoint, json=payload, timeout=self.timeout_s
                    )
            except requests.RequestException as exc:
                last = RemoteUnavailable("connection", str(exc))
                continue
            if resp.status_code == 200:
                try:
                    return resp.json()
                except ValueError as exc:
                    raise RemoteUnavailable(resp.status_code, f"invalid JSON: {exc}") from exc
            last = RemoteUnavailable(resp.status_code, resp.text[:200])
            if resp.status_code < 500 and resp.status_code != 429:
                break
        raise last  # type: ignore[misc]


def embed_text(provider: EmbedderDescriptor, text: str) -> EmbeddingVector:
    """Embed one text with the provider named by the descriptor."""
    if not text.strip():
        raise EmptyText("cannot embed empty text")
    if provider.kind == "hashed_local":
        return hashed_embed(text, dim=provider.dim, seed=provider.seed)
    if provider.kind == "remote":
        return RemoteEmbedder(provider).embed_many([text])[0]
    raise ValueError(f"unknown embedder kind {provider.kind!r}")


def embed_batch(provider: EmbedderDescriptor, texts: list[str]) -> list[EmbeddingVector]:
    """Order-preserving batch embed; element i equals embed_text(provider, texts[i])."""
    for i, text in enumerate(texts):
        if not text.strip():
            raise EmptyText(f"empty text at index {i}")
    if not texts:
        return []
    if provider.kind == "hashed_local":
        return [hashed_embed(t, dim=provider.dim, seed=provider.seed) for t in texts]
    if provider.kind == "remote":
        return RemoteEmbedder(provider).embed_many(texts)
    raise ValueError(f"unknown embedder kind {provider.kind!r}")


class Embedder:
    """Reusable embedding handle: one descriptor, one (lazy) remote client."""

    def __init__(self, descriptor: EmbedderDescriptor, **client_kwargs):
        self.descriptor = descriptor
        self._client: RemoteEmbedder | None = None
        self._client_kwargs = client_kwargs

    @property
    def dim(self) -> int:
        return self.descriptor.dim

    @property
    def name(self) -> str:
        return self.descriptor.name

    def embed(self, text: str) -> EmbeddingVector:
        if not text.strip():
            raise EmptyText("cannot embed empty text")
        if self.descriptor.kind == "hashed_local":
            return hashed_embed(text, dim=self.descriptor.dim, seed=self.descriptor.seed)
        return self._remote().embed_many([text])[0]

    def embed_many(self, texts: list[str]) -> list[EmbeddingVector]:
        for i, text in enumerate(texts):
            if not text.strip():
                raise EmptyText(f"empty text at index {i}")
        if not texts:
            return []
        if self.descriptor.kind == "hashed_local":
            return [
                hashed_embed(t, dim=self.descriptor.dim, seed=self.descriptor.seed)
                for t in texts
            ]
        return self._remote().embed_many(texts)

    def _remote(self) -> RemoteEmbedder:
        if self._client is None:
            self._client = RemoteEmbedder(self.descriptor, **self._client_kwargs)
        return self._client
