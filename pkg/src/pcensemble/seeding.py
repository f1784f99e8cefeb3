"""Deterministic random-stream derivation.

Every run funnels its randomness through one root seed. Independent parts of
the pipeline (dataset generation, training, corruption, inference) pull named
sub-streams so that work can be reordered or parallelized without changing
results: the stream for (root, *path) depends only on the root seed and the
path tokens, never on call order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _token(part: int | str) -> int:
    if isinstance(part, bool):  # bool is an int subclass; reject to avoid surprises
        raise TypeError("stream path parts must be ints or strings")
    if isinstance(part, (int, np.integer)):
        return int(part)
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"stream path parts must be ints or strings, got {type(part)!r}")


def substream(root_seed: int, *path: int | str) -> np.random.Generator:
    """Return the generator for a named sub-stream of the root seed."""
    entropy = [_token(root_seed)] + [_token(p) for p in path]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def subseed(root_seed: int, *path: int | str) -> int:
    """Derive a child integer seed for a named sub-stream of the root seed."""
    entropy = [_token(root_seed)] + [_token(p) for p in path]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


def choose_without_replacement(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    """Draw k distinct indices from range(n), uniformly, via partial Fisher-Yates.

    The first k entries of a Fisher-Yates shuffle are an exact uniform sample
    without replacement; the remaining n-k swaps are never performed.
    """
    if not 0 <= k <= n:
        raise ValueError(f"cannot draw {k} distinct indices from {n}")
    idx = np.arange(n)
    u = rng.random(k)
    for i in range(k):
        j = i + int(u[i] * (n - i))
        idx[i], idx[j] = idx[j], idx[i]
    return idx[:k]
