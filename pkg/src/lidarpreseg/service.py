"""HTTP annotation service over presegmented sequences.

The service exposes one directory per sequence. A sequence directory holds
manifest.json (frame and pose paths), a labels/ directory of per-frame
.label files, an optional tracks.json segment manifest, and journal.jsonl
recording annotation mutations. Mutations are serialized per sequence by
AnnotationState's lock (single writer); reads copy the frame they need and
never block on other sequences. No endpoint mutates point geometry.

Frame payload (GET /sequences/{s}/frames/{t}), all little-endian:

    offset  size  field
    0       4     magic, the bytes "LPSF"
    4       2     payload version, u16, currently 1
    6       2     reserved, u16, always 0
    8       4     frame index, u32
    12      4     point count N, u32
    16      16*N  points, N records of 4 float32: x, y, z, intensity
    16+16N  4*N   labels, N u32: semantic id in the low 16 bits,
                  instance id in the high 16 bits

Error envelope: {"error": {"code": ..., "message": ...}} with HTTP 404 for
unknown ids, 409 (code "journal_conflict", "retry": true) when a mutation
was based on a stale version, and 422 for invalid parameters.
"""

from __future__ import annotations

import json
import os
import struct
import threading
import uuid

import numpy as np
from fastapi import Body, FastAPI
from fastapi.responses import JSONResponse, Response

from .errors import (
    JournalConflictError,
    ParameterError,
    PresegError,
    UnknownIdError,
)
from .fileio import (
    LabelMap,
    SequenceManifest,
    load_manifest,
    pack_labels,
    read_point_frame,
    unpack_labels,
)
from .pipeline import PipelineConfig, run_presegmentation
from .state import AnnotationState

PAYLOAD_MAGIC = b"LPSF"
PAYLOAD_VERSION = 1
_HEADER = struct.Struct("<4sHHII")


def build_frame_payload(
    frame_index: int, points: np.ndarray, semantic: np.ndarray, instance: np.ndarray
) -> bytes:
    pts = np.ascontiguousarray(points, dtype="<f4")
    if pts.ndim != 2 or pts.shape[1] != 4:
        raise ParameterError("points must be (N, 4)")
    if len(semantic) != len(pts):
        raise ParameterError("label count must match point count")
    words = pack_labels(semantic, instance).astype("<u4")
    header = _HEADER.pack(
        PAYLOAD_MAGIC, PAYLOAD_VERSION, 0, frame_index, len(pts)
    )
    return header + pts.tobytes() + words.tobytes()


def parse_frame_payload(data: bytes) -> tuple[int, np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of build_frame_payload; returns (frame, points, sem, inst)."""
    if len(data) < _HEADER.size:
        raise ParameterError("payload shorter than header")
    magic, version, _, frame, count = _HEADER.unpack_from(data)
    if magic != PAYLOAD_MAGIC:
        raise ParameterError("bad payload magic")
    if version != PAYLOAD_VERSION:
        raise ParameterError(f"unsupported payload version {version}")
    need = _HEADER.size + 20 * count
    if len(data) != need:
        raise ParameterError(f"payload size {len(data)} != expected {need}")
    pts = np.frombuffer(data, dtype="<f4", count=4 * count, offset=_HEADER.size)
    words = np.frombuffer(data, dtype="<u4", count=count, offset=_HEADER.size + 16 * count)
    sem, inst = unpack_labels(words)
    return frame, pts.reshape(count, 4).copy(), sem, inst


def _frame_point_counts(manifest: SequenceManifest) -> list[int]:
    # each point record is 4 float32 = 16 bytes
    return [os.path.getsize(p) // 16 for p in manifest.frame_paths]


class SequenceContext:
    """Everything the service holds for one sequence directory."""

    def __init__(self, name: str, directory: str):
        self.name = name
        self.directory = directory
        self.manifest_path = os.path.join(directory, "manifest.json")
        self.manifest = load_manifest(self.manifest_path)
        self.label_dir = os.path.join(directory, "labels")
        have_labels = os.path.isdir(self.label_dir) and any(
            n.endswith(".label") for n in os.listdir(self.label_dir)
        )
        if not have_labels:
            # not yet presegmented: start from all-unlabeled frames
            LabelMap.empty(_frame_point_counts(self.manifest)).save(self.label_dir)
        self.state = AnnotationState(
            self.label_dir, os.path.join(directory, "journal.jsonl")
        )

    def frame_payload(self, t: int) -> bytes:
        if not 0 <= t < len(self.manifest.frame_paths):
            raise UnknownIdError(f"frame {t} out of range")
        frame = read_point_frame(self.manifest.frame_paths[t], frame_index=t)
        sem, inst = self.state.snapshot_frame(t)
        if len(sem) != len(frame.points):
            raise ParameterError(
                f"frame {t}: label count {len(sem)} != point count {len(frame.points)}"
            )
        return build_frame_payload(t, frame.points, sem, inst)


def discover_sequences(root: str) -> dict[str, SequenceContext]:
    """Each subdirectory of root with a manifest.json is a sequence."""
    found = {}
    for name in sorted(os.listdir(root)):
        directory = os.path.join(root, name)
        if os.path.isfile(os.path.join(directory, "manifest.json")):
            found[name] = SequenceContext(name, directory)
    if not found:
        raise ParameterError(f"no sequence directories under {root}")
    return found


class JobRegistry:
    """Tracks background presegmentation jobs by id."""

    def __init__(self):
        self._jobs: dict[str, dict] = {}
        self._lock = threading.Lock()

    def create(self, sequence: str) -> str:
        job_id = uuid.uuid4().hex[:12]
        with self._lock:
            self._jobs[job_id] = {
                "id": job_id,
                "sequence": sequence,
                "state": "running",
                "stage": "load",
                "fraction": 0.0,
                "error": None,
            }
        return job_id

    def update(self, job_id: str, **fields) -> None:
        with self._lock:
            self._jobs[job_id].update(fields)

    def get(self, job_id: str) -> dict:
        with self._lock:
            if job_id not in self._jobs:
                raise UnknownIdError(f"unknown job {job_id}")
            return dict(self._jobs[job_id])


def _error_response(exc: PresegError) -> JSONResponse:
    if isinstance(exc, JournalConflictError):
        return JSONResponse(
            status_code=409,
            content={
                "error": {
                    "code": "journal_conflict",
                    "message": str(exc),
                    "retry": True,
                    "expected": exc.expected,
                    "actual": exc.actual,
                }
            },
        )
    if isinstance(exc, UnknownIdError):
        return JSONResponse(
            status_code=404,
            content={"error": {"code": "not_found", "message": str(exc)}},
        )
    return JSONResponse(
        status_code=422,
        content={"error": {"code": "invalid_parameter", "message": str(exc)}},
    )


def _require_int(body: dict, key: str) -> int:
    if key not in body:
        raise ParameterError(f"missing field '{key}'")
    value = body[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParameterError(f"field '{key}' must be an integer")
    return value


def _optional_version(body: dict) -> int | None:
    value = body.get("expected_version")
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParameterError("expected_version must be an integer")
    return value


def create_app(sequences: dict[str, SequenceContext] | str) -> FastAPI:
    """Build the service over a root directory or prebuilt contexts."""
    if isinstance(sequences, str):
        sequences = discover_sequences(sequences)
    app = FastAPI(title="lidarpreseg annotation service")
    app.state.sequences = sequences
    app.state.jobs = JobRegistry()

    def seq(name: str) -> SequenceContext:
        ctx = sequences.get(name)
        if ctx is None:
            raise UnknownIdError(f"unknown sequence {name!r}")
        return ctx

    @app.exception_handler(PresegError)
    async def handle_preseg_error(request, exc: PresegError):
        return _error_response(exc)

    @app.get("/sequences")
    def list_sequences():
        return {
            "sequences": [
                {
                    "name": ctx.name,
                    "frames": len(ctx.manifest.frame_paths),
                    "version": ctx.state.version,
                }
                for ctx in sequences.values()
            ]
        }

    @app.get("/sequences/{name}/frames/{t}")
    def get_frame(name: str, t: int):
        payload = seq(name).frame_payload(t)
        return Response(content=payload, media_type="application/octet-stream")

    @app.get("/sequences/{name}/segments")
    def get_segments(name: str):
        ctx = seq(name)
        doc = {"version": ctx.state.version, "segments": ctx.state.segments()}
        tracks_path = os.path.join(ctx.directory, "tracks.json")
        if os.path.exists(tracks_path):
            with open(tracks_path, "r", encoding="utf-8") as fh:
                doc["keyframes"] = json.load(fh).get("keyframes", [])
        return doc

    @app.post("/sequences/{name}/assign")
    def post_assign(name: str, body: dict = Body(...)):
        ctx = seq(name)
        entry = {
            "op": "assign",
            "segment_id": _require_int(body, "segment_id"),
            "semantic_id": _require_int(body, "semantic_id"),
        }
        res = ctx.state.submit(entry, _optional_version(body))
        return {"version": res.version}

    @app.post("/sequences/{name}/merge")
    def post_merge(name: str, body: dict = Body(...)):
        ctx = seq(name)
        ids = body.get("ids")
        if not isinstance(ids, list) or not all(
            isinstance(i, int) and not isinstance(i, bool) for i in ids
        ):
            raise ParameterError("field 'ids' must be a list of integers")
        if len(set(ids)) == 1:
            # merging a segment with itself is a recorded no-op
            return {"version": ctx.state.version, "target": ids[0], "noop": True}
        res = ctx.state.submit(
            {"op": "merge", "ids": ids}, _optional_version(body)
        )
        return {"version": res.version, "target": res.result["target"]}

    @app.post("/sequences/{name}/split")
    def post_split(name: str, body: dict = Body(...)):
        ctx = seq(name)
        idx = body.get("point_indices")
        if not isinstance(idx, list):
            raise ParameterError("field 'point_indices' must be a list")
        entry = {
            "op": "split",
            "segment_id": _require_int(body, "segment_id"),
            "frame": _require_int(body, "frame"),
            "point_indices": idx,
        }
        res = ctx.state.submit(entry, _optional_version(body))
        return {"version": res.version, "new_id": res.result["new_id"]}

    @app.post("/sequences/{name}/auto_instance")
    def post_auto_instance(name: str, body: dict = Body(default={})):
        ctx = seq(name)
        res = ctx.state.submit({"op": "auto_instance"}, _optional_version(body))
        return {"version": res.version, "mapping": res.result["mapping"]}

    @app.post("/sequences/{name}/save")
    def post_save(name: str):
        ctx = seq(name)
        paths = ctx.state.save()
        return {
            "version": ctx.state.version,
            "paths": [os.path.basename(p) for p in paths],
        }

    @app.post("/sequences/{name}/presegment")
    def post_presegment(name: str, body: dict = Body(default={})):
        ctx = seq(name)
        overrides = body.get("config", {})
        if not isinstance(overrides, dict):
            raise ParameterError("field 'config' must be an object")
        doc = dict(overrides)
        doc["manifest"] = ctx.manifest_path
        doc["output_dir"] = ctx.directory
        config = PipelineConfig.from_dict(doc)
        job_id = app.state.jobs.create(name)

        def run():
            try:
                run_presegmentation(
                    config,
                    progress=lambda ev: app.state.jobs.update(
                        job_id, stage=ev.stage, fraction=ev.fraction
                    ),
                )
                # fresh base labels make the old journal stale
                journal = ctx.state.journal_path
                if os.path.exists(journal):
                    os.remove(journal)
                ctx.state.reload()
                app.state.jobs.update(job_id, state="done", fraction=1.0)
            except Exception as exc:
                app.state.jobs.update(job_id, state="error", error=str(exc))

        threading.Thread(target=run, daemon=True).start()
        return {"job_id": job_id}

    @app.get("/jobs/{job_id}/progress")
    def get_progress(job_id: str):
        return app.state.jobs.get(job_id)

    return app
