"""Shared fixtures: tiny corpora, embedders, indexes and mock backends."""

from __future__ import annotations

import numpy as np
import pytest

from ragforge.chunking import Chunk, ChunkStore
from ragforge.embedding import Embedder, EmbedderDescriptor, EmbeddingVector
from ragforge.vector_index import IndexEntry, build_flat


@pytest.fixture
def hashed_embedder() -> Embedder:
    return Embedder(EmbedderDescriptor(name="test-hashed", dim=64, kind="hashed_local", seed=7))


def make_unit_vectors(n: int, dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    matrix = rng.standard_normal((n, dim)).astype(np.float32)
    matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
    return matrix


def entries_from_matrix(matrix: np.ndarray, prefix: str = "c") -> list[IndexEntry]:
    width = len(str(len(matrix)))
    return [
        IndexEntry(f"{prefix}{i:0{width}d}", EmbeddingVector(matrix[i]))
        for i in range(len(matrix))
    ]


@pytest.fixture
def tiny_corpus(hashed_embedder):
    """Three single-chunk documents with disjoint vocabulary, plus flat index."""
    texts = {
        "doc-a#0": "nozzle temperature affects adhesion strongly",
        "doc-b#0": "layer height controls resolution and speed",
        "doc-c#0": "resin curing depends on exposure duration",
    }
    chunks = [
        Chunk(cid, cid.split("#")[0], 0, 0, len(text.split()), text)
        for cid, text in texts.items()
    ]
    store = ChunkStore(chunks)
    vectors = hashed_embedder.embed_many([c.text for c in chunks])
    index = build_flat([IndexEntry(c.chunk_id, v) for c, v in zip(chunks, vectors)])
    titles = {"doc-a": "Nozzle Guide", "doc-b": "Layer Primer", "doc-c": "Resin Handbook"}
    return index, store, titles, chunks
