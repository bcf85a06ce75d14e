"""Binary index persistence (little-endian, magic ``AMVX``).

Layout: magic, format version u32, flags u8 (bit0 = HNSW graph present),
dim u32, entry count u64, metric u8 (0 = cosine), metadata block (three
length-prefixed UTF-8 strings: embedder name, chunk size, overlap), then per
entry id length u16 + id + dim float32 values. When the graph flag is set:
node count u64, per node level u8 and per layer neighbor count u16 + u64
ordinals, then the build seed u64.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..embedding import EmbeddingVector
from ..errors import BadMagic, IoFailure, TruncatedFile, UnsupportedVersion
from .flat import FlatIndex, IndexEntry, IndexProvenance
from .hnsw import HnswIndex

MAGIC = b"AMVX"
FORMAT_VERSION = 1
_FLAG_HNSW = 0x01
_METRIC_COSINE = 0


class _Reader:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise TruncatedFile(
                f"needed {n} bytes at offset {self._pos}, only {len(self._data) - self._pos} left"
            )
        out = self._data[self._pos : self._pos + n]
        self._pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def string(self) -> str:
        return self.take(self.u16()).decode("utf-8")

    def at_end(self) -> bool:
        return self._pos == len(self._data)


def _pack_string(text: str) -> bytes:
    raw = text.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise IoFailure(f"string too long to serialize ({len(raw)} bytes)")
    return struct.pack("<H", len(raw)) + raw


def save_index(index: FlatIndex | HnswIndex, path: str | Path) -> None:
    is_hnsw = isinstance(index, HnswIndex)
    prov = index.provenance
    parts = [
        MAGIC,
        struct.pack("<I", FORMAT_VERSION),
        struct.pack("<B", _FLAG_HNSW if is_hnsw else 0),
        struct.pack("<I", index.dim),
        struct.pack("<Q", len(index.ids)),
        struct.pack("<B", _METRIC_COSINE),
        _pack_string(prov.embedder_name),
        _pack_string(str(prov.chunk_size)),
        _pack_string(str(prov.overlap)),
    ]
    for i, chunk_id in enumerate(index.ids):
        parts.append(_pack_string(chunk_id))
        parts.append(index.matrix[i].astype("<f4", copy=False).tobytes())
    if is_hnsw:
        parts.append(struct.pack("<Q", len(index.ids)))
        for node in range(len(index.ids)):
            parts.append(struct.pack("<B", index.levels[node]))
            for layer_neighbors in index.neighbors[node]:
                parts.append(struct.pack("<H", len(layer_neighbors)))
                for ordinal in layer_neighbors:
                    parts.append(struct.pack("<Q", ordinal))
        parts.append(struct.pack("<Q", index.seed & 0xFFFFFFFFFFFFFFFF))

    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(b"".join(parts))
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc


def load_index(path: str | Path) -> FlatIndex | HnswIndex:
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError as exc:
        raise IoFailure(f"{path}: {exc}") from exc
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc

    reader = _Reader(data)
    magic = reader.take(4)
    if magic != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, found {magic!r}")
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"format version {version}")
    flags = reader.u8()
    dim = reader.u32()
    count = reader.u64()
    metric = reader.u8()
    if metric != _METRIC_COSINE:
        raise UnsupportedVersion(f"unknown metric code {metric}")
    embedder_name = reader.string()
    chunk_size_s = reader.string()
    overlap_s = reader.string()
    try:
        provenance = IndexProvenance(embedder_name, int(chunk_size_s or 0), int(overlap_s or 0))
    except ValueError as exc:
        raise TruncatedFile(f"corrupt metadata block: {exc}") from exc

    entries: list[IndexEntry] = []
    for _ in range(count):
        chunk_id = reader.string()
        raw = reader.take(dim * 4)
        values = np.frombuffer(raw, dtype="<f4").astype(np.float32, copy=True)
        entries.append(IndexEntry(chunk_id, EmbeddingVector(values)))

    if not flags & _FLAG_HNSW:
        return FlatIndex(entries, provenance)

    node_count = reader.u64()
    if node_count != count:
        raise TruncatedFile(f"graph node count {node_count} != entry count {count}")
    levels: list[int] = []
    neighbors: list[list[list[int]]] = []
    for _ in range(node_count):
        level = reader.u8()
        levels.append(level)
        per_layer: list[list[int]] = []
        for _ in range(level + 1):
            n_edges = reader.u16()
            edges = [reader.u64() for _ in range(n_edges)]
            if any(o >= node_count for o in edges):
                raise TruncatedFile("graph edge references a nonexistent node")
            per_layer.append(edges)
        neighbors.append(per_layer)
    seed = reader.u64()
    return HnswIndex(entries, seed=seed, provenance=provenance, _graph=(levels, neighbors))
