"""HTTP service speaking the segmenter wire protocol.

    POST   /session                  {"frames": ["<b64 png>", ...]}
                                     -> {"session_id": "..."}
    POST   /session/{id}/prompts     {"frame", "object_id",
                                      "points": [{"x","y","positive"}]}
                                     -> {"mask": <rle>}
    POST   /session/{id}/propagate   {} -> {"masks": [<rle>, ...]}
    DELETE /session/{id}             -> {"closed": true}

Errors: {"error": {"code": str, "message": str}} with 400 bad_request,
404 unknown_session, 422 prompt_infeasible.

Every session owns one inference context and one lock: requests to the
same session apply in arrival order, while distinct sessions run
concurrently in the worker pool.
"""

from __future__ import annotations

import base64
import io
import itertools
import json
import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.responses import JSONResponse

from .errors import ModelLoadError, PromptInfeasibleError, RequestError
from .model import FloodModel, validate_points
from .rle import mask_to_rle

DEFAULT_MAX_FRAMES = 64


class UnknownSessionError(RequestError):
    """Session id never opened or already closed; served as HTTP 404."""


def decode_frame(data) -> np.ndarray:
    """Base64 PNG string -> (H, W, 3) float64 image in [0, 1]."""
    from PIL import Image

    if not isinstance(data, str):
        raise RequestError("frames must be base64 PNG strings")
    try:
        raw = base64.b64decode(data, validate=True)
        with Image.open(io.BytesIO(raw)) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except Exception as err:
        raise RequestError(f"bad PNG frame: {err}") from None
    return arr.astype(np.float64) / 255.0


def _require_int(body: dict, key: str) -> int:
    value = body.get(key)
    if not isinstance(value, int) or isinstance(value, bool):
        raise RequestError(f"field {key!r} must be an integer")
    return value


class _Session:
    def __init__(self, context, width: int, height: int):
        self.context = context
        self.width = width
        self.height = height
        self.lock = threading.Lock()


def create_app(
    model=None, max_frames_per_session: int = DEFAULT_MAX_FRAMES
) -> FastAPI:
    """Build the service around one model; sessions live in memory."""
    if model is None:
        model = FloodModel()
    if max_frames_per_session < 1:
        raise ModelLoadError("max_frames_per_session must be positive")

    app = FastAPI(title="vfm-sidecar")
    sessions: dict[str, _Session] = {}
    counter = itertools.count()
    registry_lock = threading.Lock()

    def _envelope(status: int, code: str, message: str) -> JSONResponse:
        return JSONResponse(
            {"error": {"code": code, "message": message}}, status_code=status
        )

    @app.exception_handler(RequestError)
    async def _on_request_error(request: Request, err: RequestError):
        if isinstance(err, PromptInfeasibleError):
            return _envelope(422, "prompt_infeasible", str(err))
        if isinstance(err, UnknownSessionError):
            return _envelope(404, "unknown_session", str(err))
        return _envelope(400, "bad_request", str(err))

    async def _json_body(request: Request) -> dict:
        raw = await request.body()
        if not raw:
            return {}
        try:
            body = json.loads(raw)
        except ValueError as err:
            raise RequestError(f"body is not valid JSON: {err}") from None
        if not isinstance(body, dict):
            raise RequestError("body must be a JSON object")
        return body

    def _session(sid: str) -> _Session:
        with registry_lock:
            try:
                return sessions[sid]
            except KeyError:
                raise UnknownSessionError(sid) from None

    @app.post("/session")
    async def open_session(request: Request):
        body = await _json_body(request)
        frames_raw = body.get("frames")
        if not isinstance(frames_raw, list) or not frames_raw:
            raise RequestError("'frames' must be a non-empty list")
        if len(frames_raw) > max_frames_per_session:
            raise RequestError(
                f"session of {len(frames_raw)} frames exceeds the bound "
                f"of {max_frames_per_session}"
            )

        def work():
            frames = [decode_frame(f) for f in frames_raw]
            shape = frames[0].shape
            if any(f.shape != shape for f in frames):
                raise RequestError("all session frames must share one size")
            return frames, shape

        frames, shape = await run_in_threadpool(work)
        context = model.open_context(frames)
        with registry_lock:
            sid = f"vfm-{next(counter)}"
            sessions[sid] = _Session(context, shape[1], shape[0])
        return {"session_id": sid}

    @app.post("/session/{sid}/prompts")
    async def add_prompt(sid: str, request: Request):
        sess = _session(sid)
        body = await _json_body(request)
        frame = _require_int(body, "frame")
        object_id = _require_int(body, "object_id")
        pts = validate_points(body.get("points"), sess.width, sess.height)

        def work():
            with sess.lock:
                return sess.context.prompt(frame, object_id, pts)

        mask = await run_in_threadpool(work)
        return {"mask": mask_to_rle(mask, frame, object_id)}

    @app.post("/session/{sid}/propagate")
    async def propagate(sid: str):
        sess = _session(sid)

        def work():
            with sess.lock:
                return sess.context.propagate()

        masks = await run_in_threadpool(work)
        return {"masks": [mask_to_rle(m, f, o) for f, o, m in masks]}

    @app.delete("/session/{sid}")
    async def close(sid: str):
        sess = _session(sid)
        with registry_lock:
            sessions.pop(sid, None)
        with sess.lock:
            sess.context.close()
        return {"closed": True}

    return app
