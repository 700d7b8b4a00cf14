"""Deterministic, splittable random streams.

Every stream is identified by ``(seed, tag, chunk)``.  The tag is hashed with
SHA-256 to a 32-bit word so that it is stable across processes and Python
versions; the triple feeds a ``SeedSequence`` whose state drives a Philox
counter-based generator.  Chunk sizes are fixed by the caller, never by the
worker count, so results do not depend on how chunks are scheduled.
"""
from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np

DEFAULT_CHUNK = 1 << 16


def tag_word(tag: str) -> int:
    return int.from_bytes(hashlib.sha256(tag.encode()).digest()[:4], "little")


def stream(seed: int, tag: str, chunk: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, tag_word(tag), int(chunk)])
    return np.random.Generator(np.random.Philox(ss))


def chunk_sizes(n: int, chunk: int = DEFAULT_CHUNK) -> list[int]:
    if n < 1:
        raise ValueError("need at least one sample")
    full, rest = divmod(n, chunk)
    return [chunk] * full + ([rest] if rest else [])


def map_chunks(fn, n: int, seed: int, tag: str, chunk: int = DEFAULT_CHUNK, workers: int = 1):
    """Apply ``fn(rng, size)`` to each chunk; results come back in chunk order."""
    sizes = chunk_sizes(n, chunk)
    jobs = [(stream(seed, tag, i), size) for i, size in enumerate(sizes)]
    if workers <= 1 or len(jobs) == 1:
        return [fn(g, size) for g, size in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))
