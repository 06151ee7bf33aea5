"""Flat-index addressing of unordered sample pairs.

Pairs (i, j) with i < j over n samples are enumerated row-major:
(0,1), (0,2), ..., (n-2, n-1).  Flat indexing lets pair subsets be drawn
uniformly without materializing all n(n-1)/2 pairs.
"""

from __future__ import annotations

import numpy as np


def n_pairs(n: int) -> int:
    return n * (n - 1) // 2


def decode_pair_indices(t: np.ndarray, n: int) -> np.ndarray:
    """Map flat pair indices to (i, j) rows with i < j."""
    t = np.asarray(t, dtype=np.int64)
    b = 2 * n - 1
    i = np.floor((b - np.sqrt(b * b - 8.0 * t.astype(np.float64))) / 2.0).astype(np.int64)
    i = np.clip(i, 0, n - 2)
    off = i * n - (i * (i + 1)) // 2
    # float sqrt may land one row off in either direction
    high = off > t
    i[high] -= 1
    off[high] = i[high] * n - (i[high] * (i[high] + 1)) // 2
    nxt = (i + 1) * n - ((i + 1) * (i + 2)) // 2
    low = t >= nxt
    i[low] += 1
    off[low] = nxt[low]
    j = t - off + i + 1
    return np.stack([i, j], axis=1)


def sample_pair_indices(rng: np.random.Generator, total: int, count: int) -> np.ndarray:
    """Draw ``min(count, total)`` distinct flat pair indices uniformly.

    For small populations a full permutation is cheapest; otherwise
    with-replacement draws deduped in arrival order give a uniform
    without-replacement sample once enough distinct values arrive.
    """
    count = min(count, total)
    if total <= max(4 * count, 65536):
        return rng.permutation(total)[:count]
    draws = rng.integers(0, total, size=count + count // 4 + 16)
    while np.unique(draws).size < count:
        draws = np.concatenate([draws, rng.integers(0, total, size=count)])
    _, first = np.unique(draws, return_index=True)
    return draws[np.sort(first)[:count]]
