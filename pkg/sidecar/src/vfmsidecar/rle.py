"""Row-major uncompressed RLE, counts alternating starting with background."""

from __future__ import annotations

import numpy as np

from .errors import RequestError


def mask_to_rle(mask: np.ndarray, frame: int, object_id: int) -> dict:
    """Encode a 2D boolean mask as the wire protocol's RLE document."""
    arr = np.asarray(mask, dtype=bool)
    if arr.ndim != 2:
        raise RequestError("mask must be 2D")
    flat = arr.reshape(-1)
    edges = np.nonzero(flat[1:] != flat[:-1])[0] + 1
    bounds = np.concatenate([[0], edges, [flat.size]])
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts.insert(0, 0)  # counts always start with a background run
    return {
        "size": [int(arr.shape[0]), int(arr.shape[1])],
        "counts": [int(c) for c in counts],
        "frame": int(frame),
        "object_id": int(object_id),
    }


def rle_to_mask(doc: dict) -> np.ndarray:
    """Decode the wire document back to a 2D boolean mask."""
    try:
        h, w = (int(v) for v in doc["size"])
        counts = [int(c) for c in doc["counts"]]
    except (KeyError, TypeError, ValueError) as err:
        raise RequestError(f"bad RLE document: {err}") from None
    if h < 1 or w < 1:
        raise RequestError("mask size must be positive")
    if any(c < 0 for c in counts) or sum(counts) != h * w:
        raise RequestError("RLE counts do not cover the mask")
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for c in counts:
        if value:
            flat[pos : pos + c] = True
        pos += c
        value = not value
    return flat.reshape(h, w)
