import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ragforge.chunking import (
    Chunk,
    ChunkStore,
    ChunkingConfig,
    chunk_document,
    coverage_check,
    detokenize,
    expected_chunk_count,
    load_chunks,
    save_chunks,
    tokenize,
)
from ragforge.errors import EmptyDocument
from ragforge.ingest import CleanDocument


def doc_of_tokens(n: int) -> CleanDocument:
    return CleanDocument.from_text("doc", " ".join(f"t{i}" for i in range(n)))


class TestTokenize:
    def test_basic_split(self):
        assert tokenize("layer height 0.2mm") == ["layer", "height", "0.2mm"]

    def test_empty(self):
        assert tokenize("") == []

    def test_whitespace_runs(self):
        assert tokenize("  a   b ") == ["a", "b"]

    def test_detokenize_rejoins_with_single_spaces(self):
        assert detokenize(["a", "b", "c"]) == "a b c"


class TestChunkDocument:
    def test_1000_tokens_512_64(self):
        chunks = chunk_document(doc_of_tokens(1000), ChunkingConfig(512, 64))
        spans = [(c.token_start, c.token_end) for c in chunks]
        assert spans == [(0, 512), (448, 960), (896, 1000)]
        assert [c.chunk_id for c in chunks] == ["doc#0", "doc#1", "doc#2"]

    def test_small_doc_single_chunk(self):
        chunks = chunk_document(doc_of_tokens(10), ChunkingConfig(512, 64))
        assert [(c.token_start, c.token_end) for c in chunks] == [(0, 10)]

    def test_513_tokens(self):
        chunks = chunk_document(doc_of_tokens(513), ChunkingConfig(512, 64))
        assert [(c.token_start, c.token_end) for c in chunks] == [(0, 512), (448, 513)]

    def test_empty_document(self):
        with pytest.raises(EmptyDocument):
            chunk_document(CleanDocument.from_text("doc", "   "), ChunkingConfig(8, 2))

    def test_text_matches_token_slice(self):
        doc = doc_of_tokens(20)
        tokens = tokenize(doc.text)
        for chunk in chunk_document(doc, ChunkingConfig(8, 3)):
            assert chunk.text == detokenize(tokens[chunk.token_start : chunk.token_end])
            assert chunk.token_count == chunk.token_end - chunk.token_start

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            ChunkingConfig(0, 0)
        with pytest.raises(ValueError):
            ChunkingConfig(8, 8)
        with pytest.raises(ValueError):
            ChunkingConfig(8, -1)


class TestCoverageCheck:
    def mk(self, spans):
        return [
            Chunk(f"d#{i}", "d", i, start, end, "")
            for i, (start, end) in enumerate(spans)
        ]

    def test_overlapping_full_cover(self):
        ok, gaps = coverage_check(self.mk([(0, 512), (448, 1000)]), 1000)
        assert ok and gaps == []

    def test_gap_reported(self):
        ok, gaps = coverage_check(self.mk([(0, 5), (10, 20)]), 20)
        assert not ok
        assert gaps == [(5, 10)]

    def test_vacuous(self):
        ok, gaps = coverage_check([], 0)
        assert ok and gaps == []

    def test_tail_gap(self):
        ok, gaps = coverage_check(self.mk([(0, 5)]), 9)
        assert not ok and gaps == [(5, 9)]

    def test_overrun_fails(self):
        ok, _ = coverage_check(self.mk([(0, 25)]), 20)
        assert not ok


class TestProperties:
    @given(
        n=st.integers(min_value=1, max_value=3000),
        size=st.integers(min_value=1, max_value=512),
        data=st.data(),
    )
    @settings(max_examples=200, deadline=None)
    def test_coverage_count_reconstruction(self, n, size, data):
        overlap = data.draw(st.integers(min_value=0, max_value=size - 1))
        cfg = ChunkingConfig(size, overlap)
        doc = doc_of_tokens(n)
        chunks = chunk_document(doc, cfg)

        ok, gaps = coverage_check(chunks, n)
        assert ok, f"gaps: {gaps}"
        assert len(chunks) == expected_chunk_count(n, cfg)
        if n <= size:
            assert len(chunks) == 1
        else:
            assert len(chunks) == math.ceil((n - overlap) / (size - overlap))

        # adjacent overlap is exactly cfg.overlap except the clamped tail
        for left, right in zip(chunks, chunks[1:]):
            assert right.token_start == left.token_end - overlap or (
                right.token_end == n and right.token_start == left.token_end - overlap
            )

        # dropping the first `overlap` tokens of every non-first chunk rebuilds the doc
        tokens = tokenize(doc.text)
        rebuilt = list(tokens[chunks[0].token_start : chunks[0].token_end])
        for chunk in chunks[1:]:
            rebuilt.extend(tokens[chunk.token_start + overlap : chunk.token_end])
        assert rebuilt == tokens

    def test_no_chunk_is_strict_subset(self):
        rng = random.Random(5)
        for _ in range(100):
            size = rng.randint(2, 64)
            overlap = rng.randint(0, size - 1)
            n = rng.randint(1, 500)
            chunks = chunk_document(doc_of_tokens(n), ChunkingConfig(size, overlap))
            spans = [(c.token_start, c.token_end) for c in chunks]
            for i, a in enumerate(spans):
                for j, b in enumerate(spans):
                    if i != j:
                        strictly_inside = a[0] >= b[0] and a[1] <= b[1] and a != b
                        assert not strictly_inside


class TestChunkStore:
    def test_roundtrip_with_escapes(self, tmp_path):
        chunks = [
            Chunk("d#0", "d", 0, 0, 3, "plain text body"),
            Chunk("d#1", "d", 1, 2, 5, "tab\there and\nnewline and \\ backslash"),
        ]
        path = tmp_path / "chunks.tsv"
        save_chunks(chunks, path)
        loaded = load_chunks(path)
        assert loaded == chunks

    def test_store_lookup(self, tmp_path):
        chunks = [Chunk("d#0", "d", 0, 0, 2, "a b")]
        path = tmp_path / "chunks.tsv"
        save_chunks(chunks, path)
        store = ChunkStore.open(path)
        assert "d#0" in store
        assert store.get("d#0").text == "a b"
        assert store.get("missing") is None
        assert len(store) == 1
