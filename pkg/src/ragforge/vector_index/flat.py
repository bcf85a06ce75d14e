"""Exact exhaustive-scan index over unit vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..embedding import EmbeddingVector
from ..errors import DimensionMismatch, DuplicateChunkId, EmptyIndex, InvalidK


@dataclass(frozen=True)
class IndexEntry:
    chunk_id: str
    vector: EmbeddingVector


@dataclass(frozen=True)
class SearchHit:
    chunk_id: str
    score: float


@dataclass(frozen=True)
class IndexProvenance:
    embedder_name: str = ""
    chunk_size: int = 0
    overlap: int = 0


def validate_entries(entries: list[IndexEntry]) -> tuple[list[str], np.ndarray]:
    """Shared entry validation; returns ids plus the stacked float32 matrix."""
    if not entries:
        raise EmptyIndex("an index requires at least one entry")
    dim = entries[0].vector.dim
    ids: list[str] = []
    seen: set[str] = set()
    for entry in entries:
        if entry.vector.dim != dim:
            raise DimensionMismatch(
                f"entry {entry.chunk_id!r} has dim {entry.vector.dim}, expected {dim}"
            )
        if entry.chunk_id in seen:
            raise DuplicateChunkId(entry.chunk_id)
        seen.add(entry.chunk_id)
        ids.append(entry.chunk_id)
    matrix = np.vstack([e.vector.values for e in entries]).astype(np.float32, copy=False)
    return ids, matrix


def rank_hits(ids: list[str], scores: np.ndarray, k: int) -> list[SearchHit]:
    """Total-order selection: score descending, chunk_id ascending on ties."""
    ids_arr = np.asarray(ids)
    order = np.lexsort((ids_arr, -scores))
    return [SearchHit(ids[i], float(scores[i])) for i in order[:k]]


class FlatIndex:
    """Immutable exact-search index; linear scan with float32 dot scoring."""

    kind = "flat"
    metric = "cosine"

    def __init__(self, entries: list[IndexEntry], provenance: IndexProvenance | None = None):
        self.ids, self.matrix = validate_entries(entries)
        self.dim = int(self.matrix.shape[1])
        self.provenance = provenance or IndexProvenance()

    def __len__(self) -> int:
        return len(self.ids)

    def _check_query(self, query: EmbeddingVector, k: int) -> None:
        if query.dim != self.dim:
            raise DimensionMismatch(f"query dim {query.dim} != index dim {self.dim}")
        if k < 1:
            raise InvalidK(f"k must be >= 1, got {k}")

    def search(self, query: EmbeddingVector, k: int) -> list[SearchHit]:
        self._check_query(query, k)
        q = query.values
        scores = np.empty(len(self.ids), dtype=np.float32)
        for i in range(len(self.ids)):
            scores[i] = np.dot(self.matrix[i], q)
        return rank_hits(self.ids, scores, k)

    def entries(self) -> list[IndexEntry]:
        return [
            IndexEntry(cid, EmbeddingVector(self.matrix[i].copy()))
            for i, cid in enumerate(self.ids)
        ]


def build_flat(
    entries: list[IndexEntry], provenance: IndexProvenance | None = None
) -> FlatIndex:
    return FlatIndex(entries, provenance)


def search_exact(index: FlatIndex, query: EmbeddingVector, k: int) -> list[SearchHit]:
    return index.search(query, k)
