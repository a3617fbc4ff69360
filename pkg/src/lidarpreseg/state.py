"""Annotation state: per-sequence labels plus an append-only mutation journal.

The on-disk base is a directory of per-frame .label files; every mutation
(assign, merge, split, auto_instance) is appended to a JSONL journal after it
validates. Current state is always base labels + replay(journal), and replay
is a pure function, so reopening a sequence reproduces the state exactly.
The journal's entry count is the state version; writers may pass the version
they based a mutation on and are rejected with a conflict error when it is
stale. Saving flushes the current labels back to the base files and resets
the journal, making the flushed files the new base.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass

import numpy as np

from .errors import JournalConflictError, ParameterError, UnknownIdError
from .evaluation import renumber_instances
from .fileio import LabelMap, atomic_write_text, read_label_file

MAX_LABEL_ID = np.iinfo(np.uint16).max


def load_label_dir(directory: str) -> LabelMap:
    """Read every .label file in a directory, sorted by file name."""
    names = sorted(n for n in os.listdir(directory) if n.endswith(".label"))
    if not names:
        raise ParameterError(f"no .label files under {directory}")
    return LabelMap(
        [read_label_file(os.path.join(directory, n)) for n in names]
    )


def apply_assign(labels: LabelMap, segment_id: int, semantic_id: int) -> None:
    """Give every point of a segment the semantic class, sequence-wide."""
    if not 0 <= semantic_id <= MAX_LABEL_ID:
        raise ParameterError("semantic_id out of range")
    found = False
    for sem, inst in labels.frames:
        sel = inst == segment_id
        if sel.any():
            sem[sel] = semantic_id
            found = True
    if not found:
        raise UnknownIdError(f"segment {segment_id} does not exist")


def apply_merge(labels: LabelMap, ids: list[int]) -> int:
    """Relabel all listed instances to the smallest id; returns it."""
    ids = sorted(set(int(i) for i in ids))
    if len(ids) < 2:
        raise ParameterError("merge needs at least two distinct ids")
    if ids[0] == 0:
        raise ParameterError("id 0 is unlabeled and cannot merge")
    target = ids[0]
    found = False
    for _, inst in labels.frames:
        sel = np.isin(inst, ids)
        if sel.any():
            found = True
            inst[sel] = target
    if not found:
        raise UnknownIdError("none of the ids exist")
    return target


def apply_split(
    labels: LabelMap, segment_id: int, frame: int, point_indices: list[int]
) -> int:
    """Move selected points at the cut frame, and the whole segment in every
    later frame, to a fresh id; returns the new id."""
    if not 0 <= frame < len(labels):
        raise UnknownIdError("frame out of range")
    if segment_id == 0:
        raise ParameterError("id 0 is unlabeled and cannot split")
    if not any((inst == segment_id).any() for _, inst in labels.frames):
        raise UnknownIdError(f"segment {segment_id} does not exist")
    idx = np.asarray(point_indices, dtype=np.int64)
    if idx.size == 0:
        raise ParameterError("split needs at least one point")
    sem_f, inst_f = labels.frames[frame]
    if idx.min() < 0 or idx.max() >= len(inst_f):
        raise ParameterError("point index out of range")
    if not (inst_f[idx] == segment_id).all():
        raise ParameterError("selected points must all belong to the segment")
    new_id = int(max(int(inst.max()) for _, inst in labels.frames)) + 1
    if new_id > MAX_LABEL_ID:
        raise ParameterError("instance id space exhausted")
    inst_f[idx] = new_id
    for f in range(frame + 1, len(labels)):
        _, inst = labels.frames[f]
        inst[inst == segment_id] = new_id
    return new_id


def apply_auto_instance(labels: LabelMap) -> dict[int, int]:
    """Renumber instances within each semantic class by first appearance."""
    frames, mapping = renumber_instances(
        [(s.astype(np.int64), i.astype(np.int64)) for s, i in labels.frames]
    )
    for k, (sem, inst) in enumerate(frames):
        labels.frames[k] = (sem.astype(np.uint16), inst.astype(np.uint16))
    return mapping


def apply_entry(labels: LabelMap, entry: dict) -> dict:
    """Apply one journal entry in place; returns the entry's result fields."""
    op = entry.get("op")
    if op == "assign":
        apply_assign(labels, int(entry["segment_id"]), int(entry["semantic_id"]))
        return {}
    if op == "merge":
        target = apply_merge(labels, entry["ids"])
        return {"target": target}
    if op == "split":
        new_id = apply_split(
            labels,
            int(entry["segment_id"]),
            int(entry["frame"]),
            entry["point_indices"],
        )
        return {"new_id": new_id}
    if op == "auto_instance":
        mapping = apply_auto_instance(labels)
        return {"mapping": {str(k): v for k, v in mapping.items()}}
    raise ParameterError(f"unknown journal op {op!r}")


def replay(base: LabelMap, entries: list[dict]) -> LabelMap:
    """Pure replay: base labels + journal entries -> current labels."""
    labels = base.copy()
    for entry in entries:
        apply_entry(labels, entry)
    return labels


def segment_summary(labels: LabelMap) -> list[dict]:
    """Per-instance summary: frames, point counts, dominant semantic class."""
    segs: dict[int, dict] = {}
    for f, (sem, inst) in enumerate(labels.frames):
        nz = inst != 0
        ids, inv = np.unique(inst[nz], return_inverse=True)
        if ids.size == 0:
            continue
        counts = np.bincount(inv)
        sems = sem[nz]
        for pos, sid in enumerate(ids):
            seg = segs.setdefault(
                int(sid), {"id": int(sid), "frames": [], "point_counts": [], "_sem": {}}
            )
            seg["frames"].append(f)
            seg["point_counts"].append(int(counts[pos]))
            svals, scnt = np.unique(sems[inv == pos], return_counts=True)
            for sv, sc in zip(svals, scnt):
                seg["_sem"][int(sv)] = seg["_sem"].get(int(sv), 0) + int(sc)
    out = []
    for sid in sorted(segs):
        seg = segs[sid]
        votes = seg.pop("_sem")
        top = max(votes.values())
        seg["semantic"] = min(s for s, n in votes.items() if n == top)
        out.append(seg)
    return out


@dataclass
class JournalEntryResult:
    version: int
    result: dict


class AnnotationState:
    """Mutable label state for one sequence, guarded by a per-instance lock.

    All mutations go through submit(), which validates against the current
    labels, appends to the journal, and bumps the version. Reads hand out
    copies so readers never see a mutation midway.
    """

    def __init__(self, label_dir: str, journal_path: str):
        self.label_dir = label_dir
        self.journal_path = journal_path
        self.lock = threading.Lock()
        self._load()

    def _load(self) -> None:
        self.base = load_label_dir(self.label_dir)
        self.entries: list[dict] = []
        if os.path.exists(self.journal_path):
            with open(self.journal_path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        self.entries.append(json.loads(line))
        self.labels = replay(self.base, self.entries)

    @property
    def version(self) -> int:
        return len(self.entries)

    def reload(self) -> None:
        """Re-read base labels and journal from disk (used after a
        presegmentation job rewrites the base)."""
        with self.lock:
            self._load()

    def snapshot_frame(self, frame: int) -> tuple[np.ndarray, np.ndarray]:
        if not 0 <= frame < len(self.labels):
            raise UnknownIdError("frame out of range")
        with self.lock:
            sem, inst = self.labels.frames[frame]
            return sem.copy(), inst.copy()

    def segments(self) -> list[dict]:
        with self.lock:
            return segment_summary(self.labels)

    def submit(self, entry: dict, expected_version: int | None = None) -> JournalEntryResult:
        """Validate, apply, and journal one mutation."""
        with self.lock:
            if expected_version is not None and expected_version != self.version:
                raise JournalConflictError(
                    "stale version; refresh and retry",
                    expected=expected_version,
                    actual=self.version,
                )
            # apply on a scratch copy first so a failing op cannot leave the
            # live labels half-mutated
            scratch = self.labels.copy()
            result = apply_entry(scratch, entry)
            self.labels = scratch
            self.entries.append(entry)
            with open(self.journal_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
            return JournalEntryResult(self.version, result)

    def save(self) -> list[str]:
        """Flush current labels to the base .label files and reset the journal."""
        with self.lock:
            paths = self.labels.save(self.label_dir)
            atomic_write_text(self.journal_path, "")
            self.base = self.labels.copy()
            self.entries = []
            return paths
