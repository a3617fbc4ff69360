"""Driving the annotation backend the way a frontend would.

The HTTP service exposes sequences, streams point frames as a compact
binary payload, and applies journaled edits (assign / merge / split) under
optimistic concurrency: every edit names the version it expects, and a
stale edit is rejected with a 409 instead of clobbering newer work. Save
flushes the journal into the base labels.

Run:  python3 demos/07_annotation_service.py
"""

import tempfile
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from lidarpreseg import synthetic
from lidarpreseg.service import create_app, parse_frame_payload

root = Path(tempfile.mkdtemp(prefix="lidarpreseg_demo_service_"))
seq = synthetic.generate_sequence(n_frames=4, seed=0, name="drive")
synthetic.save_sequence(seq, root / "drive")

client = TestClient(create_app(str(root)))

doc = client.get("/sequences").json()
print(f"served sequences: {doc['sequences']}")
name = doc["sequences"][0]["name"]

resp = client.get(f"/sequences/{name}/frames/0")
frame, points, sem, inst = parse_frame_payload(resp.content)
print(f"\nframe 0 payload: {len(resp.content)} bytes -> {len(points)} points")
print(f"  semantic classes present: {np.unique(sem).tolist()}")

segs = client.get(f"/sequences/{name}/segments").json()
version = segs["version"]
ids = [s["id"] for s in segs["segments"] if s["id"] != 0]
print(f"  segments: {ids} at version {version}")

# assign a semantic class to one segment
resp = client.post(f"/sequences/{name}/assign", json={
    "segment_id": ids[0], "semantic_id": 42, "expected_version": version,
})
version = resp.json()["version"]
print(f"\nassigned class 42 to segment {ids[0]} -> version {version}")

# a stale edit is refused and nothing changes
stale = client.post(f"/sequences/{name}/assign", json={
    "segment_id": ids[0], "semantic_id": 7, "expected_version": 0,
})
err = stale.json()["error"]
print(f"replaying an old version: HTTP {stale.status_code}, "
      f"code={err['code']}, retry={err['retry']} "
      f"(expected {err['expected']}, actual {err['actual']})")

# merge the remaining object segments into one id
resp = client.post(f"/sequences/{name}/merge", json={
    "ids": ids[1:3], "expected_version": version,
})
doc = resp.json()
version = doc["version"]
print(f"merged {ids[1:3]} -> segment {doc['target']}, version {version}")

# split: carve two points out of the merged segment at frame 0
frame, points, sem, inst = parse_frame_payload(
    client.get(f"/sequences/{name}/frames/0").content)
member = np.nonzero(inst == doc["target"])[0][:2]
resp = client.post(f"/sequences/{name}/split", json={
    "segment_id": doc["target"], "frame": 0,
    "point_indices": member.tolist(), "expected_version": version,
})
doc = resp.json()
version = doc["version"]
print(f"split off {len(member)} points -> new segment {doc['new_id']}, "
      f"version {version}")

# save flushes the journal into the base label files
resp = client.post(f"/sequences/{name}/save", json={})
doc = resp.json()
print(f"\nsave wrote {doc['paths']} and reset the version to "
      f"{doc['version']}")

# a fresh client over the same directory sees the edits
fresh = TestClient(create_app(str(root)))
segs = fresh.get(f"/sequences/{name}/segments").json()
by_id = {s["id"]: s for s in segs["segments"]}
print(f"fresh client: segment {ids[0]} now carries class "
      f"{by_id[ids[0]]['semantic']}, journal version {segs['version']}")
assert by_id[ids[0]]["semantic"] == 42
