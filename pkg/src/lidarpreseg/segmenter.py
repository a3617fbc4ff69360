"""Promptable video segmentation behind a session interface.

Two interchangeable backends expose the same contract:

* MockSegmenter, a deterministic color flood fill used for tests and offline
  runs. It needs per-frame prompts (the pipeline supplies them through 3D
  propagation) and guarantees the prompt contract: every returned mask
  contains all positive points and no negative point, shrinking its color
  tolerance up to 4 times before declaring the prompts infeasible.
* RemoteSegmenter, an HTTP client for a sidecar service wrapping a real
  promptable model.

Wire protocol (JSON over HTTP, base64 PNG frames, uncompressed row-major RLE
with counts alternating starting with background):

    POST   /session                    {"frames": ["<b64 png>", ...]}
                                       -> {"session_id": "..."}
    POST   /session/{id}/prompts       {"frame": int, "object_id": int,
                                        "points": [{"x": int, "y": int,
                                                    "positive": bool}, ...]}
                                       -> {"mask": <rle>}
    POST   /session/{id}/propagate     {} -> {"masks": [<rle>, ...]}
    DELETE /session/{id}               -> {"closed": true}

    <rle> = {"size": [height, width], "counts": [int, ...],
             "frame": int, "object_id": int}

Errors use {"error": {"code": str, "message": str}} with HTTP 400 for bad
requests, 404 for unknown sessions, and 422 with code "prompt_infeasible"
when no mask can satisfy the prompts.
"""

from __future__ import annotations

import base64
import io
import itertools
import threading
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ParameterError, PromptInfeasibleError, SegmenterProtocolError

FLOOD_TOLERANCE = 0.10
MAX_HALVINGS = 4

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class SegMask:
    """Run-length encoded binary mask for one (frame, object) pair."""

    frame: int
    object_id: int
    height: int
    width: int
    counts: tuple[int, ...]

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ParameterError("mask size must be positive")
        if any(c < 0 for c in self.counts):
            raise ParameterError("RLE counts must be non-negative")
        if sum(self.counts) != self.height * self.width:
            raise ParameterError(
                f"RLE counts sum to {sum(self.counts)}, "
                f"expected {self.height * self.width}"
            )

    @classmethod
    def from_array(cls, mask: np.ndarray, frame: int = 0, object_id: int = 0):
        arr = np.asarray(mask, dtype=bool)
        if arr.ndim != 2:
            raise ParameterError("mask must be 2D")
        flat = arr.reshape(-1)
        edges = np.nonzero(flat[1:] != flat[:-1])[0] + 1
        bounds = np.concatenate([[0], edges, [flat.size]])
        runs = np.diff(bounds).tolist()
        if flat[0]:
            runs.insert(0, 0)  # counts always start with a background run
        return cls(frame, object_id, arr.shape[0], arr.shape[1], tuple(runs))

    def to_array(self) -> np.ndarray:
        flat = np.zeros(self.height * self.width, dtype=bool)
        pos = 0
        value = False
        for c in self.counts:
            if value:
                flat[pos : pos + c] = True
            pos += c
            value = not value
        return flat.reshape(self.height, self.width)

    def to_json(self) -> dict:
        return {
            "size": [self.height, self.width],
            "counts": list(self.counts),
            "frame": self.frame,
            "object_id": self.object_id,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SegMask":
        try:
            h, w = doc["size"]
            return cls(
                int(doc.get("frame", 0)),
                int(doc.get("object_id", 0)),
                int(h),
                int(w),
                tuple(int(c) for c in doc["counts"]),
            )
        except (KeyError, TypeError, ValueError) as err:
            raise SegmenterProtocolError(f"bad RLE payload: {err}") from None

    @property
    def area(self) -> int:
        return sum(self.counts[1::2])


@dataclass(frozen=True)
class SessionHandle:
    session_id: str
    frame_count: int
    width: int
    height: int


def _validate_points(points: np.ndarray, width: int, height: int) -> np.ndarray:
    pts = np.asarray(points, dtype=np.int64)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
        raise ParameterError("points must be a non-empty (K, 3) array of x, y, flag")
    if not np.isin(pts[:, 2], (0, 1)).all():
        raise ParameterError("point polarity must be 0 or 1")
    if (
        (pts[:, 0] < 0).any()
        or (pts[:, 0] >= width).any()
        or (pts[:, 1] < 0).any()
        or (pts[:, 1] >= height).any()
    ):
        raise ParameterError("prompt point outside the raster")
    if not (pts[:, 2] == 1).any():
        raise ParameterError("at least one positive point is required")
    return pts


def flood_mask(
    image: np.ndarray, points: np.ndarray, tolerance: float = FLOOD_TOLERANCE
) -> np.ndarray:
    """Mask satisfying the prompt contract on one RGB image.

    For each positive point, pixels within the current Euclidean RGB
    tolerance of that point's color form a candidate region; the positive's
    4-connected component of it joins the mask. If any negative point lands
    in the mask the tolerance is halved and the fill repeats, at most
    MAX_HALVINGS times, after which the prompts are declared infeasible.
    """
    img = np.asarray(image, dtype=np.float64)
    pts = _validate_points(points, img.shape[1], img.shape[0])
    positives = pts[pts[:, 2] == 1]
    negatives = pts[pts[:, 2] == 0]
    tol = float(tolerance)
    for _ in range(MAX_HALVINGS + 1):
        mask = np.zeros(img.shape[:2], dtype=bool)
        for x, y, _flag in positives:
            seed_color = img[y, x]
            within = np.linalg.norm(img - seed_color, axis=2) <= tol
            labeled, _ = ndimage.label(within, structure=_CROSS)
            mask |= labeled == labeled[y, x]
        if not any(mask[y, x] for x, y, _flag in negatives):
            return mask
        tol /= 2.0
    raise PromptInfeasibleError(
        f"negative prompt still absorbed after {MAX_HALVINGS} tolerance halvings"
    )


class BaseSegmenter:
    """Interface shared by the mock and the remote client."""

    def open_session(self, frames: list[np.ndarray]) -> SessionHandle:
        raise NotImplementedError

    def add_prompt(
        self, handle: SessionHandle, frame: int, object_id: int, points: np.ndarray
    ) -> SegMask:
        raise NotImplementedError

    def propagate(self, handle: SessionHandle) -> list[SegMask]:
        raise NotImplementedError

    def close(self, handle: SessionHandle) -> None:
        raise NotImplementedError


def _check_frames(frames: list[np.ndarray]) -> tuple[int, int]:
    if not frames:
        raise ParameterError("a session needs at least one frame")
    shape = None
    for f in frames:
        arr = np.asarray(f)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ParameterError("frames must be (H, W, 3) arrays")
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise ParameterError("all session frames must share one size")
    return shape[1], shape[0]


class MockSegmenter(BaseSegmenter):
    """Deterministic flood-fill backend; sessions live in memory."""

    def __init__(self, tolerance: float = FLOOD_TOLERANCE):
        self.tolerance = tolerance
        self._sessions: dict[str, dict] = {}
        self._counter = itertools.count()
        self._lock = threading.Lock()

    def open_session(self, frames: list[np.ndarray]) -> SessionHandle:
        width, height = _check_frames(frames)
        with self._lock:
            sid = f"mock-{next(self._counter)}"
            self._sessions[sid] = {
                "frames": [np.asarray(f, dtype=np.float64) for f in frames],
                "prompts": {},
            }
        return SessionHandle(sid, len(frames), width, height)

    def _session(self, handle: SessionHandle) -> dict:
        try:
            return self._sessions[handle.session_id]
        except KeyError:
            raise SegmenterProtocolError(
                f"unknown session {handle.session_id!r}"
            ) from None

    def add_prompt(
        self, handle: SessionHandle, frame: int, object_id: int, points: np.ndarray
    ) -> SegMask:
        sess = self._session(handle)
        if not 0 <= frame < len(sess["frames"]):
            raise ParameterError(f"frame {frame} out of range")
        pts = _validate_points(points, handle.width, handle.height)
        mask = flood_mask(sess["frames"][frame], pts, self.tolerance)
        sess["prompts"][(frame, object_id)] = pts
        return SegMask.from_array(mask, frame=frame, object_id=object_id)

    def propagate(self, handle: SessionHandle) -> list[SegMask]:
        sess = self._session(handle)
        out = []
        for frame, object_id in sorted(sess["prompts"]):
            mask = flood_mask(
                sess["frames"][frame], sess["prompts"][(frame, object_id)],
                self.tolerance,
            )
            out.append(SegMask.from_array(mask, frame=frame, object_id=object_id))
        return out

    def close(self, handle: SessionHandle) -> None:
        self._session(handle)
        del self._sessions[handle.session_id]


# ---------------------------------------------------------------------------
# PNG helpers shared with the service side


def encode_frame_png(frame: np.ndarray) -> str:
    from PIL import Image

    arr = np.asarray(frame)
    if arr.dtype != np.uint8:
        arr = np.clip(np.asarray(arr, dtype=np.float64) * 255.0 + 0.5, 0, 255).astype(
            np.uint8
        )
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_frame_png(data: str) -> np.ndarray:
    from PIL import Image

    try:
        raw = base64.b64decode(data, validate=True)
        with Image.open(io.BytesIO(raw)) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except Exception as err:
        raise SegmenterProtocolError(f"bad PNG frame: {err}") from None
    return arr.astype(np.float64) / 255.0


class RemoteSegmenter(BaseSegmenter):
    """Client for a segmentation service speaking the wire protocol.

    An httpx.Client may be injected (tests use an in-process transport);
    otherwise one is created against base_url.
    """

    def __init__(self, base_url: str, client=None, timeout: float = 60.0):
        import httpx

        self.base_url = base_url.rstrip("/")
        self._client = client or httpx.Client(
            base_url=self.base_url, timeout=timeout
        )

    def _request(self, method: str, path: str, json_body=None) -> dict:
        import httpx

        try:
            resp = self._client.request(method, path, json=json_body)
        except httpx.HTTPError as err:
            raise SegmenterProtocolError(f"transport failure: {err}") from None
        if resp.status_code >= 400:
            self._raise_error(resp)
        try:
            return resp.json() if resp.content else {}
        except ValueError as err:
            raise SegmenterProtocolError(f"non-JSON reply: {err}") from None

    @staticmethod
    def _raise_error(resp) -> None:
        code, message = "", f"HTTP {resp.status_code}"
        try:
            err = resp.json().get("error", {})
            code = err.get("code", "")
            message = err.get("message", message)
        except ValueError:
            pass
        if code == "prompt_infeasible":
            raise PromptInfeasibleError(message)
        raise SegmenterProtocolError(f"{resp.status_code}: {code or 'error'} {message}")

    def open_session(self, frames: list[np.ndarray]) -> SessionHandle:
        width, height = _check_frames(frames)
        doc = self._request(
            "POST", "/session", {"frames": [encode_frame_png(f) for f in frames]}
        )
        sid = doc.get("session_id")
        if not isinstance(sid, str) or not sid:
            raise SegmenterProtocolError("reply lacks session_id")
        return SessionHandle(sid, len(frames), width, height)

    def add_prompt(
        self, handle: SessionHandle, frame: int, object_id: int, points: np.ndarray
    ) -> SegMask:
        pts = _validate_points(points, handle.width, handle.height)
        body = {
            "frame": int(frame),
            "object_id": int(object_id),
            "points": [
                {"x": int(x), "y": int(y), "positive": bool(flag)}
                for x, y, flag in pts
            ],
        }
        doc = self._request("POST", f"/session/{handle.session_id}/prompts", body)
        if "mask" not in doc:
            raise SegmenterProtocolError("reply lacks mask")
        return SegMask.from_json(doc["mask"])

    def propagate(self, handle: SessionHandle) -> list[SegMask]:
        doc = self._request("POST", f"/session/{handle.session_id}/propagate", {})
        masks = doc.get("masks")
        if not isinstance(masks, list):
            raise SegmenterProtocolError("reply lacks masks")
        return [SegMask.from_json(m) for m in masks]

    def close(self, handle: SessionHandle) -> None:
        self._request("DELETE", f"/session/{handle.session_id}")
