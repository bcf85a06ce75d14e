"""Vector index: exact flat scan, approximate HNSW graph, binary persistence.

The flat scan is the correctness oracle for the HNSW index; both share one
scoring primitive (pairwise float32 dot product) and one hit ordering (score
descending, chunk_id ascending).
"""

from .flat import FlatIndex, IndexEntry, IndexProvenance, SearchHit, build_flat, search_exact
from .hnsw import (
    DEFAULT_EF_CONSTRUCTION,
    DEFAULT_EF_SEARCH,
    DEFAULT_M,
    HnswIndex,
    build_hnsw,
    search_approx,
)
from .store import load_index, save_index
from ..errors import EmptyExact


def recall_at_k(approx: list[SearchHit], exact: list[SearchHit]) -> float:
    """|approx ids ∩ exact ids| / |exact ids|."""
    if not exact:
        raise EmptyExact("exact hit list is empty")
    exact_ids = {h.chunk_id for h in exact}
    approx_ids = {h.chunk_id for h in approx}
    return len(approx_ids & exact_ids) / len(exact_ids)


__all__ = [
    "FlatIndex",
    "HnswIndex",
    "IndexEntry",
    "IndexProvenance",
    "SearchHit",
    "build_flat",
    "build_hnsw",
    "search_exact",
    "search_approx",
    "save_index",
    "load_index",
    "recall_at_k",
    "DEFAULT_M",
    "DEFAULT_EF_CONSTRUCTION",
    "DEFAULT_EF_SEARCH",
]
