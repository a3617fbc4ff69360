"""Tests for scoring: alignment, renumbering, panoptic quality, tracking."""

import numpy as np
import pytest

from lidarpreseg.errors import ParameterError
from lidarpreseg.evaluation import (
    class_iou,
    lstq,
    mean_iou,
    panoptic_quality,
    renumber_instances,
    semantic_oracle_align,
)


# ---------------------------------------------------------------------------
# Semantic oracle alignment


def test_align_majority_vote_across_frames():
    # segment 1: three points of class 4 vs two of class 2 -> class 4
    inst0 = np.array([1, 1, 1, 0])
    sem0 = np.array([4, 4, 2, 9])
    inst1 = np.array([1, 1, 2, 2])
    sem1 = np.array([4, 2, 7, 7])
    aligned, mapping = semantic_oracle_align([inst0, inst1], [sem0, sem1])
    assert mapping == {1: 4, 2: 7}
    assert np.array_equal(aligned[0], [4, 4, 4, 0])  # instance 0 stays class 0
    assert np.array_equal(aligned[1], [4, 4, 7, 7])


def test_align_tie_takes_smaller_class():
    inst = np.array([3, 3, 3, 3])
    sem = np.array([5, 2, 5, 2])
    _, mapping = semantic_oracle_align([inst], [sem])
    assert mapping == {3: 2}


def test_align_validation():
    with pytest.raises(ParameterError):
        semantic_oracle_align([np.zeros(3)], [np.zeros(3), np.zeros(3)])
    with pytest.raises(ParameterError):
        semantic_oracle_align([np.zeros(3)], [np.zeros(4)])


# ---------------------------------------------------------------------------
# Instance renumbering


def test_renumber_orders_by_first_frame_then_size():
    # class 1: instance 5 (frame 0, 3 points), instance 9 (frame 0, 2
    # points), instance 2 (frame 1). Expected new ids: 5->1, 9->2, 2->3.
    # class 7's instance 5 is independent and becomes 1 in its own class.
    frames = [
        (np.array([1, 1, 1, 1, 1]), np.array([5, 5, 5, 9, 9])),
        (np.array([1, 1, 7, 7]), np.array([2, 2, 5, 5])),
    ]
    out, mapping = renumber_instances(frames)
    assert np.array_equal(out[0][1], [1, 1, 1, 2, 2])
    assert np.array_equal(out[1][1], [3, 3, 1, 1])
    # semantics pass through untouched
    assert np.array_equal(out[0][0], frames[0][0])


def test_renumber_is_idempotent_and_keeps_zero():
    frames = [
        (np.array([1, 1, 0, 2]), np.array([8, 8, 0, 4])),
        (np.array([1, 2, 2, 0]), np.array([3, 4, 4, 0])),
    ]
    once, _ = renumber_instances(frames)
    twice, _ = renumber_instances(once)
    for (s1, i1), (s2, i2) in zip(once, twice):
        assert np.array_equal(s1, s2)
        assert np.array_equal(i1, i2)
    assert once[0][1][2] == 0


# ---------------------------------------------------------------------------
# Panoptic quality fixtures


def test_pq_perfect_prediction_is_one():
    sem = np.array([1] * 10 + [2] * 6)
    inst = np.array([1] * 5 + [2] * 5 + [1] * 6)
    report = panoptic_quality(sem, inst, sem, inst)
    assert report.pq == pytest.approx(1.0, abs=1e-9)
    assert report.sq == pytest.approx(1.0, abs=1e-9)
    assert report.rq == pytest.approx(1.0, abs=1e-9)
    assert report.miou == pytest.approx(1.0, abs=1e-9)


def test_pq_tp_fp_fn_fixture():
    # [DERIVED] one match at IoU 0.8 (8 of 10 points), one predicted segment
    # with no ground truth (FP), one ground truth segment missed (FN):
    # PQ = 0.8 / (1 + 0.5 + 0.5) = 0.4, SQ = 0.8, RQ = 0.5.
    n = 18
    gt_sem = np.full(n, 1)
    pred_sem = np.full(n, 1)
    gt_inst = np.zeros(n, dtype=np.int64)
    pred_inst = np.zeros(n, dtype=np.int64)
    gt_inst[0:10] = 1
    pred_inst[0:8] = 1
    pred_inst[10:14] = 5  # FP: no gt instance overlaps it
    gt_inst[14:18] = 7    # FN: no predicted instance overlaps it
    report = panoptic_quality(pred_sem, pred_inst, gt_sem, gt_inst)
    row = report.per_class[1]
    assert (row["tp"], row["fp"], row["fn"]) == (1, 1, 1)
    assert report.pq == pytest.approx(0.4, abs=1e-9)
    assert report.sq == pytest.approx(0.8, abs=1e-9)
    assert report.rq == pytest.approx(0.5, abs=1e-9)


def test_pq_under_segmentation_scores_zero():
    # [DERIVED] one predicted blob covering two equal gt instances touches
    # each at IoU exactly 0.5; matching requires IoU > 0.5, so nothing
    # matches: TP 0, FP 1, FN 2, PQ 0.
    sem = np.full(20, 3)
    gt_inst = np.array([1] * 10 + [2] * 10)
    pred_inst = np.full(20, 1)
    report = panoptic_quality(sem, pred_inst, sem, gt_inst)
    row = report.per_class[3]
    assert (row["tp"], row["fp"], row["fn"]) == (0, 1, 2)
    assert report.pq == pytest.approx(0.0, abs=1e-9)
    assert report.rq == pytest.approx(0.0, abs=1e-9)


def test_pq_per_class_identity_pq_equals_sq_times_rq():
    rng = np.random.default_rng(80)
    for _ in range(10):
        n = 200
        gt_sem = rng.integers(0, 4, n)
        gt_inst = rng.integers(0, 5, n)
        pred_sem = rng.integers(0, 4, n)
        pred_inst = rng.integers(0, 5, n)
        report = panoptic_quality(pred_sem, pred_inst, gt_sem, gt_inst)
        for row in report.rows():
            assert row["pq"] == pytest.approx(row["sq"] * row["rq"], abs=1e-12)


def test_pq_stuff_classes_ignore_splits():
    sem = np.full(12, 2)
    gt_inst = np.zeros(12, dtype=np.int64)
    pred_inst = np.array([1] * 4 + [2] * 4 + [3] * 4)  # split three ways
    split = panoptic_quality(sem, pred_inst, sem, gt_inst, stuff_classes={2})
    assert split.pq == pytest.approx(1.0, abs=1e-9)
    assert split.pq_stuff == pytest.approx(1.0, abs=1e-9)
    # without the stuff designation the gt side has no segment at all
    # (thing class with instance 0 is residue) and the splits are all FPs
    plain = panoptic_quality(sem, pred_inst, sem, gt_inst)
    assert plain.pq == pytest.approx(0.0, abs=1e-9)


def test_pq_validation():
    with pytest.raises(ParameterError):
        panoptic_quality(np.zeros(3), np.zeros(3), np.zeros(4), np.zeros(4))
    with pytest.raises(ParameterError):
        panoptic_quality(np.zeros(3), np.zeros(4), np.zeros(3), np.zeros(3))


# ---------------------------------------------------------------------------
# Semantic IoU


def test_mean_iou_hand_fixture():
    # class 1: pred hits 2 of 4 (IoU 2/4 with 0 extra = 0.5)
    # class 2: exact (IoU 1.0); class 0 never scores
    gt = np.array([1, 1, 1, 1, 2, 2, 0, 0])
    pred = np.array([1, 1, 0, 0, 2, 2, 0, 0])
    assert class_iou(pred, gt, 1) == pytest.approx(0.5)
    assert class_iou(pred, gt, 2) == pytest.approx(1.0)
    assert mean_iou(pred, gt) == pytest.approx(0.75, abs=1e-12)
    assert mean_iou(np.zeros(4), np.zeros(4)) == 0.0


# ---------------------------------------------------------------------------
# Tracking score


def test_lstq_perfect_prediction():
    frames = [
        (np.array([1, 1, 2]), np.array([4, 4, 9])),
        (np.array([1, 2, 2]), np.array([4, 9, 9])),
    ]
    report = lstq(frames, frames)
    assert report.score == pytest.approx(1.0, abs=1e-9)
    assert report.s_assoc == pytest.approx(1.0, abs=1e-9)
    assert report.s_cls == pytest.approx(1.0, abs=1e-9)


def test_lstq_score_is_geometric_mean():
    rng = np.random.default_rng(81)
    for _ in range(10):
        def rand_frames():
            return [
                (rng.integers(0, 3, 50), rng.integers(0, 4, 50))
                for _ in range(3)
            ]
        pred = rand_frames()
        gt = rand_frames()
        report = lstq(pred, gt)
        assert report.score == pytest.approx(
            np.sqrt(report.s_assoc * report.s_cls), abs=1e-9
        )


def test_lstq_split_track_association():
    # [DERIVED] one gt track of 2n points predicted as two n-point tracks:
    # each overlap term is n * (n / 2n), so S_assoc = (n/2 + n/2)/2n = 0.5.
    n = 6
    sem = np.full(2 * n, 1)
    gt_frames = [(sem, np.full(2 * n, 3))]
    pred_inst = np.array([1] * n + [2] * n)
    pred_frames = [(sem, pred_inst)]
    report = lstq(pred_frames, gt_frames)
    assert report.s_assoc == pytest.approx(0.5, abs=1e-9)
    assert report.s_cls == pytest.approx(1.0, abs=1e-9)
    assert report.score == pytest.approx(np.sqrt(0.5), abs=1e-9)


def test_lstq_no_instances_scores_zero_association():
    frames = [(np.array([1, 1]), np.zeros(2, dtype=np.int64))]
    report = lstq(frames, frames)
    assert report.s_assoc == 0.0
    with pytest.raises(ParameterError):
        lstq(frames, frames * 2)
    with pytest.raises(ParameterError):
        lstq([(np.zeros(2), np.zeros(2))], [(np.zeros(3), np.zeros(3))])
