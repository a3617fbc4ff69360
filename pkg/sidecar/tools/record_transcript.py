"""Record the golden wire transcript from the reference flood backend.

Regenerating tests/data/golden_transcript.json requires the annotation
backend package (lidarpreseg) installed: its mock segmenter is wrapped in
the documented JSON protocol here and driven through the same flows the
segmenter contract suite covers. The sidecar must reproduce every recorded
response; masks are compared on canonical JSON bytes.

Run:  python3 tools/record_transcript.py [output.json]
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.testclient import TestClient

from lidarpreseg.errors import (
    ParameterError,
    PromptInfeasibleError,
    SegmenterProtocolError,
)
from lidarpreseg.segmenter import MockSegmenter, decode_frame_png, encode_frame_png


def reference_app() -> FastAPI:
    """The documented wire protocol over the reference backend."""
    mock = MockSegmenter()
    app = FastAPI()
    handles: dict[str, object] = {}

    def err(status, code, message):
        return JSONResponse(
            {"error": {"code": code, "message": message}}, status_code=status
        )

    @app.post("/session")
    async def open_session(request: Request):
        body = await request.json()
        try:
            frames = [decode_frame_png(f) for f in body.get("frames", [])]
            handle = mock.open_session(frames)
        except (ParameterError, SegmenterProtocolError) as e:
            return err(400, "bad_request", str(e))
        handles[handle.session_id] = handle
        return {"session_id": handle.session_id}

    @app.post("/session/{sid}/prompts")
    async def add_prompt(sid: str, request: Request):
        if sid not in handles:
            return err(404, "unknown_session", sid)
        body = await request.json()
        points = np.array(
            [[p["x"], p["y"], 1 if p["positive"] else 0] for p in body["points"]],
            dtype=np.int64,
        ).reshape(-1, 3)
        try:
            mask = mock.add_prompt(
                handles[sid], int(body["frame"]), int(body["object_id"]), points
            )
        except PromptInfeasibleError as e:
            return err(422, "prompt_infeasible", str(e))
        except ParameterError as e:
            return err(400, "bad_request", str(e))
        return {"mask": mask.to_json()}

    @app.post("/session/{sid}/propagate")
    async def propagate(sid: str):
        if sid not in handles:
            return err(404, "unknown_session", sid)
        return {"masks": [m.to_json() for m in mock.propagate(handles[sid])]}

    @app.delete("/session/{sid}")
    async def close(sid: str):
        if sid not in handles:
            return err(404, "unknown_session", sid)
        mock.close(handles.pop(sid))
        return {"closed": True}

    return app


def blocks_image():
    """Two same-color blocks that are not 4-connected, plus a third color."""
    img = np.zeros((16, 20, 3))
    img[2:7, 2:7] = 0.5
    img[2:7, 10:15] = 0.5
    img[10:15, 2:7] = 0.9
    return img


def rim_image():
    """Core 0.50 with a 0.46 rim: one tolerance halving expels the rim."""
    img = np.zeros((16, 20, 3))
    img[2:7, 2:7] = 0.50
    img[2:7, 7:9] = 0.46
    return img


def noise_image():
    rng = np.random.default_rng(11)
    palette = np.array([0.2, 0.5, 0.8])
    return palette[rng.integers(0, 3, size=(10, 12, 1))].repeat(3, axis=2)


def pt(x, y, positive=True):
    return {"x": int(x), "y": int(y), "positive": bool(positive)}


def record() -> dict:
    client = TestClient(reference_app(), raise_server_exceptions=False)
    entries = []
    aliases: dict[str, str] = {}

    def play(method, path, body=None, alias=None, compare="exact"):
        real = path
        for name, sid in aliases.items():
            real = real.replace("{" + name + "}", sid)
        resp = client.request(method, real, json=body)
        entry = {
            "method": method,
            "path": path,
            "status": resp.status_code,
            "compare": compare,
        }
        if body is not None:
            entry["body"] = body
        doc = resp.json()
        if compare == "session":
            entry["alias"] = alias
            aliases[alias] = doc["session_id"]
        elif compare == "error_code":
            entry["error_code"] = doc["error"]["code"]
        else:
            entry["response"] = doc
        entries.append(entry)

    f_blocks = encode_frame_png(blocks_image())
    f_rim = encode_frame_png(rim_image())
    f_noise = encode_frame_png(noise_image())

    # session s0: the contract-suite geometry over two frames
    play("POST", "/session", {"frames": [f_blocks, f_rim]}, alias="s0",
         compare="session")
    play("POST", "/session/{s0}/prompts",
         {"frame": 0, "object_id": 1, "points": [pt(4, 4)]})
    play("POST", "/session/{s0}/prompts",
         {"frame": 0, "object_id": 2, "points": [pt(4, 4), pt(12, 4)]})
    play("POST", "/session/{s0}/prompts",
         {"frame": 1, "object_id": 1,
          "points": [pt(4, 4), pt(7, 4, False)]})  # halving expels the rim

    # session s1 opened while s0 is live: isolation
    play("POST", "/session", {"frames": [f_noise]}, alias="s1",
         compare="session")
    play("POST", "/session/{s1}/prompts",
         {"frame": 0, "object_id": 1, "points": [pt(3, 3)]})

    play("POST", "/session/{s0}/propagate", {})
    play("POST", "/session/{s1}/propagate", {})

    # infeasible: the negative shares the positive's uniform block
    play("POST", "/session/{s0}/prompts",
         {"frame": 0, "object_id": 9,
          "points": [pt(4, 4), pt(5, 4, False)]},
         compare="error_code")
    # the failed prompt left no trace
    play("POST", "/session/{s0}/propagate", {})

    # malformed requests
    play("POST", "/session", {"frames": []}, compare="error_code")
    play("POST", "/session/{s0}/prompts",
         {"frame": 0, "object_id": 1, "points": [pt(500, 2)]},
         compare="error_code")
    play("POST", "/session/{s0}/prompts",
         {"frame": 9, "object_id": 1, "points": [pt(4, 4)]},
         compare="error_code")
    play("POST", "/session/nowhere/prompts",
         {"frame": 0, "object_id": 1, "points": [pt(4, 4)]},
         compare="error_code")

    # closing: s1 goes away, then s0; repeat deletes are unknown
    play("DELETE", "/session/{s1}")
    play("POST", "/session/{s1}/prompts",
         {"frame": 0, "object_id": 1, "points": [pt(3, 3)]},
         compare="error_code")
    play("DELETE", "/session/{s0}")
    play("DELETE", "/session/{s0}", compare="error_code")

    return {"version": 1, "entries": entries}


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else (
        Path(__file__).resolve().parent.parent
        / "tests" / "data" / "golden_transcript.json"
    )
    doc = record()
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    statuses = [e["status"] for e in doc["entries"]]
    print(f"recorded {len(doc['entries'])} entries -> {out}")
    print(f"statuses: {statuses}")


if __name__ == "__main__":
    main()
