"""Fixed-token-length overlapping chunking of cleaned documents.

Tokens are maximal runs of non-whitespace characters; chunk text is the token
slice rejoined with single spaces, so token-level reconstruction is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

from .errors import EmptyDocument, MalformedRecord, MissingFile
from .ingest import CleanDocument

DEFAULT_CHUNK_SIZE = 512
DEFAULT_OVERLAP = 64


@dataclass(frozen=True)
class ChunkingConfig:
    chunk_size: int = DEFAULT_CHUNK_SIZE
    overlap: int = DEFAULT_OVERLAP

    def __post_init__(self):
        if self.chunk_size <= 0:
            raise ValueError(f"chunk_size must be positive, got {self.chunk_size}")
        if not 0 <= self.overlap < self.chunk_size:
            raise ValueError(f"overlap must be in [0, chunk_size), got {self.overlap}")

    @property
    def stride(self) -> int:
        return self.chunk_size - self.overlap


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    seq: int
    token_start: int
    token_end: int
    text: str

    @property
    def token_count(self) -> int:
        return self.token_end - self.token_start


def tokenize(text: str) -> list[str]:
    """Split on whitespace into maximal non-whitespace runs, order preserved."""
    return text.split()


def detokenize(tokens: list[str]) -> str:
    return " ".join(tokens)


def chunk_document(doc: CleanDocument, cfg: ChunkingConfig) -> list[Chunk]:
    """Cut a document into overlapping chunks starting at multiples of the stride.

    Every token index is covered by at least one chunk; the final chunk is
    clamped to the document end and never merged backward.
    """
    tokens = tokenize(doc.text)
    n = len(tokens)
    if n == 0:
        raise EmptyDocument(doc.doc_id)

    chunks: list[Chunk] = []
    start = 0
    seq = 0
    while start < n:
        end = min(start + cfg.chunk_size, n)
        chunks.append(
            Chunk(
                chunk_id=f"{doc.doc_id}#{seq}",
                doc_id=doc.doc_id,
                seq=seq,
                token_start=start,
                token_end=end,
                text=detokenize(tokens[start:end]),
            )
        )
        if end == n:
            break
        start += cfg.stride
        seq += 1
    return chunks


def expected_chunk_count(token_count: int, cfg: ChunkingConfig) -> int:
    """Closed-form chunk count: 1 when the document fits, else the stride ceiling."""
    if token_count <= cfg.chunk_size:
        return 1
    return math.ceil((token_count - cfg.overlap) / cfg.stride)


def coverage_check(chunks: list[Chunk], doc_token_count: int) -> tuple[bool, list[tuple[int, int]]]:
    """True iff the union of chunk spans equals [0, doc_token_count); gaps reported.

    Chunks must be sorted by token_start.
    """
    gaps: list[tuple[int, int]] = []
    frontier = 0
    overrun = False
    for chunk in chunks:
        if chunk.token_start > frontier:
            gaps.append((frontier, chunk.token_start))
        frontier = max(frontier, chunk.token_end)
        if chunk.token_end > doc_token_count:
            overrun = True
    if frontier < doc_token_count:
        gaps.append((frontier, doc_token_count))
    return (not gaps and not overrun), gaps


# --- chunk store ------------------------------------------------------------

_STORE_FIELDS = 5


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def _unescape(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            if nxt == "\\":
                out.append("\\")
                i += 2
                continue
            if nxt == "t":
                out.append("\t")
                i += 2
                continue
            if nxt == "n":
                out.append("\n")
                i += 2
                continue
        out.append(ch)
        i += 1
    return "".join(out)


def save_chunks(chunks: list[Chunk], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for c in chunks:
            fh.write(
                f"{c.chunk_id}\t{c.doc_id}\t{c.token_start}\t{c.token_end}\t{_escape(c.text)}\n"
            )


def load_chunks(path: str | Path) -> list[Chunk]:
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    chunks: list[Chunk] = []
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != _STORE_FIELDS:
            raise MalformedRecord(line_no, line[:200], f"expected {_STORE_FIELDS} fields")
        chunk_id, doc_id, start_s, end_s, text = parts
        try:
            start, end = int(start_s), int(end_s)
        except ValueError as exc:
            raise MalformedRecord(line_no, line[:200], "non-integer token offsets") from exc
        seq_str = chunk_id.rsplit("#", 1)[-1]
        seq = int(seq_str) if seq_str.isdigit() else 0
        chunks.append(Chunk(chunk_id, doc_id, seq, start, end, _unescape(text)))
    return chunks


class ChunkStore:
    """Chunk lookup by chunk_id, as needed when resolving retrieval hits."""

    def __init__(self, chunks: list[Chunk]):
        self._by_id = {c.chunk_id: c for c in chunks}

    @classmethod
    def open(cls, path: str | Path) -> "ChunkStore":
        return cls(load_chunks(path))

    def __len__(self) -> int:
        return len(self._by_id)

    def __contains__(self, chunk_id: str) -> bool:
        return chunk_id in self._by_id

    def get(self, chunk_id: str) -> Chunk | None:
        return self._by_id.get(chunk_id)

    def all(self) -> list[Chunk]:
        return list(self._by_id.values())
