"""Stable 64-bit hashing used for content hashes, prompt hashes and blinding.

Python's builtin ``hash`` is salted per process, so everything that must be
reproducible across runs goes through blake2b instead.
"""

from __future__ import annotations

import hashlib

_MASK64 = 0xFFFFFFFFFFFFFFFF


def stable_hash64(data: str | bytes, seed: int = 0) -> int:
    """Deterministic unsigned 64-bit hash of ``data``, optionally keyed by ``seed``."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    key = (seed & _MASK64).to_bytes(8, "little")
    digest = hashlib.blake2b(data, digest_size=8, key=key).digest()
    return int.from_bytes(digest, "big")
