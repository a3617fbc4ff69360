"""Segmentation model handles and the deterministic flood-fill reference.

A model exposes one inference context per session: the context owns the
decoded frames plus whatever per-session state the underlying network
needs, and is never shared between sessions. The flood model reproduces
the annotation backend's mock segmenter exactly (Euclidean RGB tolerance,
4-connected components, tolerance halved up to 4 times to expel negative
prompts), which is what the recorded-transcript suite pins down.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import ModelLoadError, PromptInfeasibleError, RequestError

FLOOD_TOLERANCE = 0.10
MAX_HALVINGS = 4

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def validate_points(points: list, width: int, height: int) -> np.ndarray:
    """Wire point dicts -> (K, 3) int array of x, y, polarity."""
    if not isinstance(points, list) or not points:
        raise RequestError("'points' must be a non-empty list")
    rows = []
    for p in points:
        try:
            rows.append((int(p["x"]), int(p["y"]), 1 if p["positive"] else 0))
        except (KeyError, TypeError, ValueError):
            raise RequestError(
                "each point needs integer 'x', 'y' and boolean 'positive'"
            ) from None
    pts = np.array(rows, dtype=np.int64)
    if (
        (pts[:, 0] < 0).any()
        or (pts[:, 0] >= width).any()
        or (pts[:, 1] < 0).any()
        or (pts[:, 1] >= height).any()
    ):
        raise RequestError("prompt point outside the raster")
    if not (pts[:, 2] == 1).any():
        raise RequestError("at least one positive point is required")
    return pts


class FloodContext:
    """Inference context of the flood model for one session."""

    def __init__(self, frames: list[np.ndarray], tolerance: float):
        self.frames = frames
        self.tolerance = tolerance
        self.prompts: dict[tuple[int, int], np.ndarray] = {}

    def _flood(self, image: np.ndarray, pts: np.ndarray) -> np.ndarray:
        positives = pts[pts[:, 2] == 1]
        negatives = pts[pts[:, 2] == 0]
        tol = float(self.tolerance)
        for _ in range(MAX_HALVINGS + 1):
            mask = np.zeros(image.shape[:2], dtype=bool)
            for x, y, _flag in positives:
                seed = image[y, x]
                within = np.linalg.norm(image - seed, axis=2) <= tol
                labeled, _ = ndimage.label(within, structure=_CROSS)
                mask |= labeled == labeled[y, x]
            if not any(mask[y, x] for x, y, _flag in negatives):
                return mask
            tol /= 2.0
        raise PromptInfeasibleError(
            f"negative prompt still absorbed after {MAX_HALVINGS} "
            "tolerance halvings"
        )

    def prompt(self, frame: int, object_id: int, pts: np.ndarray) -> np.ndarray:
        if not 0 <= frame < len(self.frames):
            raise RequestError(f"frame {frame} out of range")
        mask = self._flood(self.frames[frame], pts)
        # stored only after success: an infeasible prompt leaves no trace
        self.prompts[(frame, object_id)] = pts
        return mask

    def propagate(self) -> list[tuple[int, int, np.ndarray]]:
        out = []
        for frame, object_id in sorted(self.prompts):
            mask = self._flood(self.frames[frame], self.prompts[(frame, object_id)])
            out.append((frame, object_id, mask))
        return out

    def close(self) -> None:
        self.frames = []
        self.prompts = {}


class FloodModel:
    """Deterministic color-flood segmentation; no weights to load."""

    def __init__(self, tolerance: float = FLOOD_TOLERANCE):
        if not 0.0 < tolerance <= 2.0:
            raise ModelLoadError(f"flood tolerance {tolerance} out of range")
        self.tolerance = tolerance

    def open_context(self, frames: list[np.ndarray]) -> FloodContext:
        return FloodContext(frames, self.tolerance)


_REGISTRY = {"flood": FloodModel}


def load_model(name: str, **options):
    """Construct a model by registry name; unknown names fail startup."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(_REGISTRY))
        raise ModelLoadError(f"unknown model {name!r} (available: {known})") from None
    try:
        return factory(**options)
    except ModelLoadError:
        raise
    except Exception as err:
        raise ModelLoadError(f"model {name!r} failed to initialize: {err}") from None
