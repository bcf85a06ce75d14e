"""Hierarchical navigable small-world graph for approximate nearest neighbors.

The index is built in one deterministic batch pass per layer (corpus updates
are batch rebuilds, so construction can see the whole entry set): each node
draws its level from a seeded geometric distribution, takes its
ef_construction exact nearest neighbors within the layer as the candidate
pool, keeps a diversity-filtered subset, and edges are symmetrized then
pruned back to the per-layer cap. Queries greedily descend the upper layers,
then run a best-first beam of width ef_search at layer 0.

Returned hits are rescored with the same float32 dot primitive the flat index
uses, so exact and approximate results are directly comparable (and identical
when the beam covers the whole graph).
"""

from __future__ import annotations

import heapq
import random
from collections import deque

import numpy as np

from ..embedding import EmbeddingVector
from ..errors import DimensionMismatch, InvalidK
from .flat import IndexEntry, IndexProvenance, SearchHit, rank_hits, validate_entries

DEFAULT_M = 16
DEFAULT_EF_CONSTRUCTION = 200
DEFAULT_EF_SEARCH = 64
_MAX_LEVEL = 64
_GEMM_BLOCK = 2048


class HnswIndex:
    """Layered proximity graph over unit vectors.

    Node ordinals equal entry positions. ``neighbors[u][layer]`` lists the
    edges of ``u`` at that layer; ``u`` exists at layers 0..levels[u]. The
    entry point is the first node holding the maximum level, which lets a
    deserialized graph recover it without storing it.
    """

    kind = "hnsw"
    metric = "cosine"

    def __init__(
        self,
        entries: list[IndexEntry],
        m: int = DEFAULT_M,
        ef_construction: int = DEFAULT_EF_CONSTRUCTION,
        seed: int = 0,
        provenance: IndexProvenance | None = None,
        _graph: tuple[list[int], list[list[list[int]]]] | None = None,
    ):
        if m < 2:
            raise InvalidK(f"M must be >= 2, got {m}")
        if ef_construction < m:
            raise InvalidK(f"ef_construction must be >= M, got {ef_construction}")
        self.ids, self.matrix = validate_entries(entries)
        self.dim = int(self.matrix.shape[1])
        self.m = m
        self.m0 = 2 * m
        self.ef_construction = ef_construction
        self.seed = seed
        self.provenance = provenance or IndexProvenance()
        self._stamps = [0] * len(self.ids)
        self._stamp = 0

        if _graph is not None:
            self.levels, self.neighbors = _graph
        else:
            self.levels = self._draw_levels()
            self.neighbors = [[[] for _ in range(lvl + 1)] for lvl in self.levels]
            top = max(self.levels)
            for layer in range(top + 1):
                subset = [i for i in range(len(self.ids)) if self.levels[i] >= layer]
                if len(subset) > 1:
                    self._build_layer(subset, layer, self.m0 if layer == 0 else self.m)
        self.entry_point = self.levels.index(max(self.levels))
        if _graph is None:
            self._ensure_layer0_connectivity()

    # --- construction -----------------------------------------------------

    def _draw_levels(self) -> list[int]:
        """Geometric level per node: repeated seeded Bernoulli(1/M) trials."""
        rng = random.Random(self.seed)
        p = 1.0 / self.m
        levels = []
        for _ in range(len(self.ids)):
            level = 0
            while rng.random() < p and level < _MAX_LEVEL:
                level += 1
            levels.append(level)
        return levels

    def _build_layer(self, subset: list[int], layer: int, cap: int) -> None:
        k = len(subset)
        sub = self.matrix[subset]
        pool_n = min(self.ef_construction, k - 1)
        directed: list[list[int]] = [[] for _ in range(k)]
        for b0 in range(0, k, _GEMM_BLOCK):
            block = sub[b0 : b0 + _GEMM_BLOCK] @ sub.T
            for r in range(block.shape[0]):
                i = b0 + r
                row = block[r]
                row[i] = -2.0  # exclude self from the pool
                if pool_n < k - 1:
                    pool = np.argpartition(-row, pool_n)[: pool_n + 1].tolist()
                else:
                    pool = list(range(k))
                cand = sorted(
                    (c for c in pool if c != i), key=lambda c: (-row[c], subset[c])
                )[:pool_n]
                sims = [float(row[c]) for c in cand]
                directed[i] = self._select_diverse(sub, cand, sims, cap, refill=False)

        adjacency = [set(edges) for edges in directed]
        for i in range(k):
            for j in directed[i]:
                adjacency[j].add(i)
        for i in range(k):
            ids = sorted(adjacency[i])
            sims = (sub[ids] @ sub[i]).tolist()
            ranked = sorted(zip(sims, ids), key=lambda t: (-t[0], subset[t[1]]))
            cand = [c for _, c in ranked]
            if len(cand) > cap:
                cand_sims = [s for s, _ in ranked]
                cand = self._select_diverse(sub, cand, cand_sims, cap, refill=True)
            self.neighbors[subset[i]][layer] = [subset[c] for c in cand]

    @staticmethod
    def _select_diverse(
        sub: np.ndarray, cand: list[int], sims: list[float], cap: int, refill: bool
    ) -> list[int]:
        """Keep candidates closer to the query than to anything already kept;
        optionally refill from the discards so the degree reaches the cap."""
        if len(cand) <= cap:
            return list(cand)
        pair = (sub[cand] @ sub[cand].T).tolist()
        selected: list[int] = []
        discarded: list[int] = []
        for i in range(len(cand)):
            if len(selected) >= cap:
                break
            sim = sims[i]
            row = pair[i]
            if all(row[j] < sim for j in selected):
                selected.append(i)
            else:
                discarded.append(i)
        if refill:
            for i in discarded:
                if len(selected) >= cap:
                    break
                selected.append(i)
        return [cand[i] for i in selected]

    def _ensure_layer0_connectivity(self) -> None:
        """Bridge any node unreachable from the entry point at layer 0.

        Pruning to the degree cap can in rare cases orphan a node; each pass
        links every orphan to its nearest reached node. Bridges are pinned so
        a later cap-restoring prune cannot undo them, which makes progress
        monotonic and guarantees termination.
        """
        n = len(self.ids)
        pinned: set[tuple[int, int]] = set()
        for _ in range(n):
            reached = self.reachable_from_entry()
            if len(reached) == n:
                return
            reached_list = sorted(reached)
            reached_arr = np.asarray(reached_list, dtype=np.int64)
            for node in range(n):
                if node in reached:
                    continue
                sims = self.matrix[reached_arr] @ self.matrix[node]
                partner = reached_list[int(np.argmax(sims))]
                pinned.add((node, partner))
                pinned.add((partner, node))
                if partner not in self.neighbors[node][0]:
                    self.neighbors[node][0].append(partner)
                if node not in self.neighbors[partner][0]:
                    self.neighbors[partner][0].append(node)
                for endpoint in (node, partner):
                    if len(self.neighbors[endpoint][0]) > self.m0:
                        self._prune_keeping_pins(endpoint, pinned)

    def _prune_keeping_pins(self, node: int, pinned: set[tuple[int, int]]) -> None:
        nbrs = self.neighbors[node][0]
        pins = [v for v in nbrs if (node, v) in pinned]
        others = [v for v in nbrs if (node, v) not in pinned]
        budget = max(self.m0 - len(pins), 0)
        sims = (self.matrix[others] @ self.matrix[node]).tolist()
        ranked = sorted(zip(sims, others), key=lambda t: (-t[0], t[1]))
        self.neighbors[node][0] = pins + [v for _, v in ranked[:budget]]

    # --- search -----------------------------------------------------------

    def _layer_search(
        self, q: np.ndarray, eps: list[int], layer: int, ef: int
    ) -> list[tuple[float, int]]:
        """Best-first beam of width ef; returns (similarity, ordinal) sorted
        by similarity descending, ordinal ascending."""
        matrix = self.matrix
        neighbors = self.neighbors
        self._stamp += 1
        stamp = self._stamp
        stamps = self._stamps

        entry_sims = matrix[eps] @ q
        candidates: list[tuple[float, int]] = []  # (-sim, ordinal), best first
        result: list[tuple[float, int]] = []  # (sim, ordinal) min-heap, worst on top
        for e, s in zip(eps, entry_sims.tolist()):
            if stamps[e] == stamp:
                continue
            stamps[e] = stamp
            heapq.heappush(candidates, (-s, e))
            heapq.heappush(result, (s, e))
        while len(result) > ef:
            heapq.heappop(result)

        while candidates:
            neg_sim, node = heapq.heappop(candidates)
            if len(result) >= ef and -neg_sim < result[0][0]:
                break
            fresh = [v for v in neighbors[node][layer] if stamps[v] != stamp]
            if not fresh:
                continue
            for v in fresh:
                stamps[v] = stamp
            sims = matrix[fresh] @ q
            for v, s in zip(fresh, sims.tolist()):
                if len(result) < ef:
                    heapq.heappush(result, (s, v))
                    heapq.heappush(candidates, (-s, v))
                elif s > result[0][0]:
                    heapq.heapreplace(result, (s, v))
                    heapq.heappush(candidates, (-s, v))
        return sorted(result, key=lambda t: (-t[0], t[1]))

    def __len__(self) -> int:
        return len(self.ids)

    def search(
        self, query: EmbeddingVector, k: int, ef_search: int | None = None
    ) -> list[SearchHit]:
        if query.dim != self.dim:
            raise DimensionMismatch(f"query dim {query.dim} != index dim {self.dim}")
        if k < 1:
            raise InvalidK(f"k must be >= 1, got {k}")
        if ef_search is None:
            ef = max(DEFAULT_EF_SEARCH, k)
        else:
            if ef_search < k:
                raise InvalidK(f"ef_search ({ef_search}) must be >= k ({k})")
            ef = ef_search

        q = query.values
        eps = [self.entry_point]
        for layer in range(self.levels[self.entry_point], 0, -1):
            best = self._layer_search(q, eps, layer, 1)
            eps = [best[0][1]]
        beam = self._layer_search(q, eps, 0, ef)

        ordinals = [ordinal for _, ordinal in beam]
        ids = [self.ids[o] for o in ordinals]
        scores = np.empty(len(ordinals), dtype=np.float32)
        for i, o in enumerate(ordinals):
            scores[i] = np.dot(self.matrix[o], q)
        return rank_hits(ids, scores, k)

    # --- diagnostics --------------------------------------------------------

    def reachable_from_entry(self) -> set[int]:
        """BFS over layer-0 edges from the entry point."""
        seen = {self.entry_point}
        queue = deque([self.entry_point])
        while queue:
            node = queue.popleft()
            for peer in self.neighbors[node][0]:
                if peer not in seen:
                    seen.add(peer)
                    queue.append(peer)
        return seen

    def entries(self) -> list[IndexEntry]:
        return [
            IndexEntry(cid, EmbeddingVector(self.matrix[i].copy()))
            for i, cid in enumerate(self.ids)
        ]


def build_hnsw(
    entries: list[IndexEntry],
    m: int = DEFAULT_M,
    ef_construction: int = DEFAULT_EF_CONSTRUCTION,
    seed: int = 0,
    provenance: IndexProvenance | None = None,
) -> HnswIndex:
    return HnswIndex(entries, m=m, ef_construction=ef_construction, seed=seed, provenance=provenance)


def search_approx(
    index: HnswIndex, query: EmbeddingVector, k: int, ef_search: int = DEFAULT_EF_SEARCH
) -> list[SearchHit]:
    return index.search(query, k, ef_search=ef_search)
