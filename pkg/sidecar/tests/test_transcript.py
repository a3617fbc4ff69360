"""Golden transcript replay: the sidecar must reproduce the reference
backend's recorded wire behavior, masks byte-identical under canonical
JSON serialization. tools/record_transcript.py regenerates the fixture."""

import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from vfmsidecar.service import create_app

TRANSCRIPT = Path(__file__).parent / "data" / "golden_transcript.json"


def canonical(doc) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


@pytest.fixture(scope="module")
def transcript() -> dict:
    return json.loads(TRANSCRIPT.read_text())


def test_transcript_covers_the_protocol(transcript):
    # the fixture must stay meaningful if it is ever re-recorded
    entries = transcript["entries"]
    statuses = [e["status"] for e in entries]
    assert statuses.count(200) >= 10
    assert 400 in statuses and 404 in statuses and 422 in statuses
    kinds = {e["compare"] for e in entries}
    assert kinds == {"session", "exact", "error_code"}
    assert any("mask" in e.get("response", {}) for e in entries)
    assert any("masks" in e.get("response", {}) for e in entries)


def test_replay_reproduces_recorded_responses(transcript):
    client = TestClient(create_app(), raise_server_exceptions=False)
    aliases: dict[str, str] = {}
    replayed_masks = 0
    for i, entry in enumerate(transcript["entries"]):
        path = entry["path"]
        for name, sid in aliases.items():
            path = path.replace("{" + name + "}", sid)
        resp = client.request(entry["method"], path, json=entry.get("body"))
        where = f"entry {i}: {entry['method']} {entry['path']}"
        assert resp.status_code == entry["status"], where
        doc = resp.json()
        if entry["compare"] == "session":
            sid = doc.get("session_id")
            assert isinstance(sid, str) and sid, where
            aliases[entry["alias"]] = sid
        elif entry["compare"] == "error_code":
            assert doc["error"]["code"] == entry["error_code"], where
        else:
            assert canonical(doc) == canonical(entry["response"]), where
            if "mask" in doc or "masks" in doc:
                replayed_masks += 1
    assert replayed_masks >= 6
