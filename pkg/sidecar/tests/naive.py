"""Tiny independent oracles used by the sidecar tests."""

import numpy as np


def rle_encode_naive(mask: np.ndarray) -> list[int]:
    """One pixel at a time; counts alternate starting with background."""
    flat = [bool(v) for v in np.asarray(mask, dtype=bool).reshape(-1)]
    counts = []
    value = False
    run = 0
    for v in flat:
        if v == value:
            run += 1
        else:
            counts.append(run)
            value = v
            run = 1
    counts.append(run)
    return counts


def rle_decode_naive(counts: list[int], h: int, w: int) -> np.ndarray:
    out = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for c in counts:
        for _ in range(c):
            out[pos] = value
            pos += 1
        value = not value
    assert pos == h * w
    return out.reshape(h, w)
