"""Annotation-state tests: journal ops, replay purity, versioned submits."""

import json
import os

import numpy as np
import pytest

from lidarpreseg.errors import JournalConflictError, ParameterError, UnknownIdError
from lidarpreseg.evaluation import renumber_instances
from lidarpreseg.fileio import LabelMap, read_label_file
from lidarpreseg import state


def _labels() -> LabelMap:
    # Segment 1 lives in frames 0-1, segment 2 in all three frames.
    return LabelMap(
        [
            (np.array([1, 1, 2, 2, 2, 0]), np.array([1, 1, 2, 2, 2, 0])),
            (np.array([1, 2, 2, 0]), np.array([1, 2, 2, 0])),
            (np.array([2, 2, 2]), np.array([2, 2, 2])),
        ]
    )


def _frames_equal(a: LabelMap, b: LabelMap) -> bool:
    if len(a) != len(b):
        return False
    return all(
        np.array_equal(sa, sb) and np.array_equal(ia, ib)
        for (sa, ia), (sb, ib) in zip(a.frames, b.frames)
    )


def _open_state(tmp_path, labels: LabelMap | None = None) -> state.AnnotationState:
    label_dir = os.path.join(tmp_path, "labels")
    if labels is not None:
        labels.save(label_dir)
    return state.AnnotationState(label_dir, os.path.join(tmp_path, "journal.jsonl"))


def test_load_label_dir_round_trip(tmp_path):
    labels = _labels()
    labels.save(str(tmp_path / "labels"))
    back = state.load_label_dir(str(tmp_path / "labels"))
    assert _frames_equal(back, labels)


def test_load_label_dir_empty_raises(tmp_path):
    with pytest.raises(ParameterError):
        state.load_label_dir(str(tmp_path))


def test_apply_assign_sets_semantic_sequence_wide():
    labels = _labels()
    state.apply_assign(labels, 2, 9)
    for sem, inst in labels.frames:
        assert (sem[inst == 2] == 9).all()
        assert (sem[inst != 2] != 9).all()
    # untouched segment keeps its class
    assert labels.frames[0][0][0] == 1


def test_apply_assign_validation():
    with pytest.raises(ParameterError):
        state.apply_assign(_labels(), 2, -1)
    with pytest.raises(ParameterError):
        state.apply_assign(_labels(), 2, 65536)
    with pytest.raises(UnknownIdError):
        state.apply_assign(_labels(), 42, 9)


def test_apply_merge_relabels_to_smallest_id():
    labels = _labels()
    target = state.apply_merge(labels, [2, 1])
    assert target == 1
    for _, inst in labels.frames:
        assert not (inst == 2).any()
    assert np.array_equal(labels.frames[0][1], [1, 1, 1, 1, 1, 0])
    assert np.array_equal(labels.frames[2][1], [1, 1, 1])


def test_apply_merge_validation():
    with pytest.raises(ParameterError):
        state.apply_merge(_labels(), [2, 2])
    with pytest.raises(ParameterError):
        state.apply_merge(_labels(), [0, 2])
    with pytest.raises(UnknownIdError):
        state.apply_merge(_labels(), [41, 42])


def test_apply_split_moves_cut_and_later_frames():
    labels = _labels()
    new_id = state.apply_split(labels, 2, 1, [1])
    assert new_id == 3
    # frame before the cut keeps the old id
    assert np.array_equal(labels.frames[0][1], [1, 1, 2, 2, 2, 0])
    # cut frame: only the selected point moves
    assert np.array_equal(labels.frames[1][1], [1, 3, 2, 0])
    # every later frame moves the whole segment
    assert np.array_equal(labels.frames[2][1], [3, 3, 3])
    # semantics are untouched by a split
    assert np.array_equal(labels.frames[1][0], [1, 2, 2, 0])


def test_apply_split_new_id_scans_all_frames():
    # the max instance id lives in a frame other than the cut frame
    labels = LabelMap(
        [
            (np.array([1, 1]), np.array([7, 7])),
            (np.array([2, 2, 2]), np.array([2, 2, 2])),
        ]
    )
    assert state.apply_split(labels, 2, 1, [0]) == 8


def test_apply_split_validation():
    with pytest.raises(ParameterError):
        state.apply_split(_labels(), 0, 1, [0])
    with pytest.raises(ParameterError):
        state.apply_split(_labels(), 2, 1, [])
    with pytest.raises(ParameterError):
        state.apply_split(_labels(), 2, 1, [99])
    # index 0 of frame 1 belongs to segment 1, not 2
    with pytest.raises(ParameterError):
        state.apply_split(_labels(), 2, 1, [0, 1])
    with pytest.raises(UnknownIdError):
        state.apply_split(_labels(), 2, 5, [0])
    with pytest.raises(UnknownIdError):
        state.apply_split(_labels(), 42, 1, [0])


def test_apply_split_exhausted_id_space():
    labels = LabelMap([(np.array([2, 2]), np.array([2, 65535]))])
    with pytest.raises(ParameterError):
        state.apply_split(labels, 2, 0, [0])


def test_apply_auto_instance_matches_renumber():
    labels = LabelMap(
        [
            (np.array([1, 1, 1, 1, 1]), np.array([5, 5, 5, 9, 9])),
            (np.array([1, 7]), np.array([2, 5])),
        ]
    )
    want_frames, want_map = renumber_instances(
        [(s.astype(np.int64), i.astype(np.int64)) for s, i in labels.frames]
    )
    mapping = state.apply_auto_instance(labels)
    assert mapping == want_map
    for (sem, inst), (wsem, winst) in zip(labels.frames, want_frames):
        assert np.array_equal(sem, wsem)
        assert np.array_equal(inst, winst)


def test_apply_entry_dispatch_results():
    labels = _labels()
    assert state.apply_entry(labels, {"op": "assign", "segment_id": 2, "semantic_id": 9}) == {}
    assert state.apply_entry(labels, {"op": "merge", "ids": [1, 2]}) == {"target": 1}
    out = state.apply_entry(
        labels, {"op": "split", "segment_id": 1, "frame": 0, "point_indices": [0]}
    )
    assert out == {"new_id": 2}
    out = state.apply_entry(labels, {"op": "auto_instance"})
    assert set(out) == {"mapping"}
    assert all(isinstance(k, str) for k in out["mapping"])


def test_apply_entry_unknown_op():
    with pytest.raises(ParameterError):
        state.apply_entry(_labels(), {"op": "rotate"})


def test_replay_is_pure():
    base = _labels()
    before = base.copy()
    entries = [
        {"op": "assign", "segment_id": 2, "semantic_id": 9},
        {"op": "merge", "ids": [1, 2]},
    ]
    out1 = state.replay(base, entries)
    out2 = state.replay(base, entries)
    assert _frames_equal(base, before)
    assert _frames_equal(out1, out2)
    assert (out1.frames[0][0][2:5] == 9).all()
    assert np.array_equal(out1.frames[0][1], [1, 1, 1, 1, 1, 0])


def test_segment_summary_rows():
    labels = LabelMap(
        [
            (np.array([4, 4, 2, 0]), np.array([1, 1, 1, 0])),
            (np.array([2, 2, 6]), np.array([1, 1, 3])),
        ]
    )
    rows = state.segment_summary(labels)
    assert [row["id"] for row in rows] == [1, 3]
    seg1 = rows[0]
    assert seg1["frames"] == [0, 1]
    assert seg1["point_counts"] == [3, 2]
    # semantic votes: class 4 twice, class 2 three times
    assert seg1["semantic"] == 2
    assert rows[1] == {"id": 3, "frames": [1], "point_counts": [1], "semantic": 6}


def test_segment_summary_semantic_tie_prefers_smaller_class():
    labels = LabelMap([(np.array([5, 5, 2, 2]), np.array([1, 1, 1, 1]))])
    assert state.segment_summary(labels)[0]["semantic"] == 2


def test_state_version_counts_journal_entries(tmp_path):
    st = _open_state(tmp_path, _labels())
    assert st.version == 0
    res = st.submit({"op": "assign", "segment_id": 2, "semantic_id": 9})
    assert res.version == 1
    res = st.submit({"op": "merge", "ids": [1, 2]}, expected_version=1)
    assert res.version == 2
    assert res.result == {"target": 1}
    assert st.version == 2


def test_state_stale_version_conflicts(tmp_path):
    st = _open_state(tmp_path, _labels())
    st.submit({"op": "assign", "segment_id": 2, "semantic_id": 9}, expected_version=0)
    before = st.labels.copy()
    with pytest.raises(JournalConflictError) as exc:
        st.submit({"op": "merge", "ids": [1, 2]}, expected_version=0)
    assert exc.value.expected == 0
    assert exc.value.actual == 1
    assert st.version == 1
    assert _frames_equal(st.labels, before)
    with open(st.journal_path, encoding="utf-8") as fh:
        assert len(fh.readlines()) == 1


def test_state_journal_lines_are_canonical_json(tmp_path):
    st = _open_state(tmp_path, _labels())
    entry = {"semantic_id": 9, "op": "assign", "segment_id": 2}
    st.submit(entry)
    with open(st.journal_path, encoding="utf-8") as fh:
        line = fh.read().strip()
    assert line == json.dumps(entry, sort_keys=True)


def test_state_reopen_replays_journal(tmp_path):
    st = _open_state(tmp_path, _labels())
    st.submit({"op": "assign", "segment_id": 2, "semantic_id": 9})
    st.submit({"op": "split", "segment_id": 2, "frame": 1, "point_indices": [1]})
    again = _open_state(tmp_path)
    assert again.version == 2
    assert _frames_equal(again.labels, st.labels)
    # the base on disk is still the pre-journal state
    assert _frames_equal(again.base, _labels())


def test_state_failed_op_is_atomic(tmp_path):
    st = _open_state(tmp_path, _labels())
    before = st.labels.copy()
    # the split validates point membership only after the frame exists, so a
    # partial apply would strand points; the scratch copy must absorb it
    with pytest.raises(ParameterError):
        st.submit({"op": "split", "segment_id": 2, "frame": 1, "point_indices": [0, 1]})
    assert st.version == 0
    assert _frames_equal(st.labels, before)
    assert not os.path.exists(st.journal_path) or not open(st.journal_path).read()


def test_state_save_flushes_and_resets(tmp_path):
    st = _open_state(tmp_path, _labels())
    st.submit({"op": "assign", "segment_id": 2, "semantic_id": 9})
    st.submit({"op": "merge", "ids": [1, 2]})
    current = st.labels.copy()
    paths = st.save()
    assert st.version == 0
    assert [os.path.basename(p) for p in paths] == [
        "000000.label",
        "000001.label",
        "000002.label",
    ]
    assert open(st.journal_path, encoding="utf-8").read() == ""
    for f, path in enumerate(paths):
        sem, inst = read_label_file(path)
        assert np.array_equal(sem, current.frames[f][0])
        assert np.array_equal(inst, current.frames[f][1])
    again = _open_state(tmp_path)
    assert again.version == 0
    assert _frames_equal(again.labels, current)


def test_state_snapshot_frame_returns_copies(tmp_path):
    st = _open_state(tmp_path, _labels())
    sem, inst = st.snapshot_frame(0)
    sem[:] = 0
    inst[:] = 0
    sem2, inst2 = st.snapshot_frame(0)
    assert np.array_equal(sem2, [1, 1, 2, 2, 2, 0])
    assert np.array_equal(inst2, [1, 1, 2, 2, 2, 0])
    with pytest.raises(UnknownIdError):
        st.snapshot_frame(3)


def test_state_segments_reflect_mutations(tmp_path):
    st = _open_state(tmp_path, _labels())
    st.submit({"op": "assign", "segment_id": 2, "semantic_id": 9})
    rows = st.segments()
    by_id = {row["id"]: row for row in rows}
    assert by_id[2]["semantic"] == 9
    assert by_id[1]["frames"] == [0, 1]


def test_state_reload_reads_disk(tmp_path):
    st = _open_state(tmp_path, _labels())
    st.submit({"op": "assign", "segment_id": 2, "semantic_id": 9})
    # an external writer replaces the base and clears the journal
    fresh = LabelMap([(np.array([3]), np.array([1]))])
    fresh.save(st.label_dir)
    for name in os.listdir(st.label_dir):
        if name not in ("000000.label",):
            os.remove(os.path.join(st.label_dir, name))
    open(st.journal_path, "w").close()
    st.reload()
    assert st.version == 0
    assert len(st.labels) == 1
    assert np.array_equal(st.labels.frames[0][0], [3])
