"""Scoring predicted segments against ground truth labels.

The semantic oracle replaces manual class assignment for benchmarking: every
predicted segment (sequence-global instance id) takes the majority ground
truth class over all of its points. Quality is then summarized with the
panoptic quality family (per-class greedy matching at IoU > 0.5) and a
tracking score combining semantic IoU with a point-level association term
over whole spatio-temporal instances.

Class id 0 means unlabeled/void on both sides and never forms a segment.
Instance id 0 with a nonzero class denotes an instance-less (stuff) segment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

MATCH_IOU = 0.5


def _check_pair(sem, inst):
    sem = np.asarray(sem)
    inst = np.asarray(inst)
    if sem.shape != inst.shape or sem.ndim != 1:
        raise ParameterError("semantic and instance arrays must be equal-length 1D")
    return sem.astype(np.int64), inst.astype(np.int64)


def semantic_oracle_align(
    pred_inst_frames: list[np.ndarray],
    gt_sem_frames: list[np.ndarray],
) -> tuple[list[np.ndarray], dict[int, int]]:
    """Assign each predicted segment its majority ground-truth class.

    Ties resolve to the smaller class id. Returns per-frame semantic arrays
    for the prediction plus the segment-to-class mapping. Instance id 0 stays
    class 0 (unassigned).
    """
    if len(pred_inst_frames) != len(gt_sem_frames):
        raise ParameterError("frame counts differ")
    votes: dict[int, dict[int, int]] = {}
    for inst, sem in zip(pred_inst_frames, gt_sem_frames):
        inst = np.asarray(inst, dtype=np.int64)
        sem = np.asarray(sem, dtype=np.int64)
        if inst.shape != sem.shape:
            raise ParameterError("per-frame label arrays must align")
        mask = inst != 0
        if not mask.any():
            continue
        pairs, counts = np.unique(
            np.stack([inst[mask], sem[mask]]), axis=1, return_counts=True
        )
        for (seg, cls), n in zip(pairs.T, counts):
            per = votes.setdefault(int(seg), {})
            per[int(cls)] = per.get(int(cls), 0) + int(n)
    mapping = {
        seg: min(cls for cls in per if per[cls] == max(per.values()))
        for seg, per in votes.items()
    }
    out = []
    for inst in pred_inst_frames:
        inst = np.asarray(inst, dtype=np.int64)
        sem = np.zeros_like(inst)
        for seg, cls in mapping.items():
            sem[inst == seg] = cls
        out.append(sem)
    return out, mapping


def renumber_instances(
    frames: list[tuple[np.ndarray, np.ndarray]],
) -> tuple[list[tuple[np.ndarray, np.ndarray]], dict[int, int]]:
    """Renumber instance ids 1..n within each semantic class.

    Order follows first appearance (earliest frame); ties break by segment
    size descending, then by old id. Idempotent: applying twice changes
    nothing. Instance 0 is untouched.
    """
    first_frame: dict[tuple[int, int], int] = {}
    sizes: dict[tuple[int, int], int] = {}
    for f, (sem, inst) in enumerate(frames):
        sem, inst = _check_pair(sem, inst)
        mask = inst != 0
        pairs, counts = np.unique(
            np.stack([sem[mask], inst[mask]]), axis=1, return_counts=True
        )
        for (cls, seg), n in zip(pairs.T, counts):
            key = (int(cls), int(seg))
            first_frame.setdefault(key, f)
            sizes[key] = sizes.get(key, 0) + int(n)
    mapping: dict[int, int] = {}
    by_class: dict[int, list[tuple[int, int]]] = {}
    for cls, seg in first_frame:
        by_class.setdefault(cls, []).append((cls, seg))
    for cls, keys in by_class.items():
        keys.sort(key=lambda k: (first_frame[k], -sizes[k], k[1]))
        for new_id, (_, seg) in enumerate(keys, start=1):
            mapping[seg] = new_id
    out = []
    for sem, inst in frames:
        sem, inst = _check_pair(sem, inst)
        new_inst = inst.copy()
        for (cls, seg), _ in first_frame.items():
            new_inst[(sem == cls) & (inst == seg)] = mapping[seg]
        out.append((sem, new_inst))
    return out, mapping


# ---------------------------------------------------------------------------
# Panoptic quality


@dataclass
class PanopticReport:
    per_class: dict[int, dict] = field(default_factory=dict)
    pq: float = 0.0
    sq: float = 0.0
    rq: float = 0.0
    pq_things: float = 0.0
    pq_stuff: float = 0.0
    miou: float = 0.0

    def rows(self) -> list[dict]:
        out = []
        for cls in sorted(self.per_class):
            row = {"class": cls}
            row.update(self.per_class[cls])
            out.append(row)
        return out

    def summary(self) -> str:
        lines = [
            f"PQ    {self.pq:.4f}",
            f"SQ    {self.sq:.4f}",
            f"RQ    {self.rq:.4f}",
            f"PQ_th {self.pq_things:.4f}",
            f"PQ_st {self.pq_stuff:.4f}",
            f"mIoU  {self.miou:.4f}",
        ]
        return "\n".join(lines)


def _segments(sem: np.ndarray, inst: np.ndarray, stuff: set[int]):
    """{(class, key) -> point index array}; stuff classes collapse to key 0."""
    out: dict[tuple[int, int], np.ndarray] = {}
    valid = sem != 0
    keys = np.where(np.isin(sem, list(stuff)) if stuff else False, 0, inst)
    combo = np.stack([sem, keys])
    pairs = np.unique(combo[:, valid], axis=1)
    for cls, key in pairs.T:
        sel = np.nonzero((sem == cls) & (keys == key))[0]
        # a thing-class blob with instance 0 is unassigned residue, not a segment
        if key == 0 and int(cls) not in stuff:
            continue
        out[(int(cls), int(key))] = sel
    return out


def panoptic_quality(
    pred_sem: np.ndarray,
    pred_inst: np.ndarray,
    gt_sem: np.ndarray,
    gt_inst: np.ndarray,
    stuff_classes: set[int] | None = None,
) -> PanopticReport:
    """Panoptic quality over one point population.

    Segments of the same class match greedily by IoU, a match requires
    IoU > 0.5 (which makes the matching unique). Per class:
    PQ = sum(matched IoU) / (TP + FP/2 + FN/2), SQ = sum(IoU)/TP, RQ =
    TP / (TP + FP/2 + FN/2); aggregates average over classes that occur.
    Stuff classes are scored with all their instances merged into one segment
    per side, so splitting stuff carries no penalty.
    """
    stuff = set(stuff_classes or ())
    ps, pi = _check_pair(pred_sem, pred_inst)
    gs, gi = _check_pair(gt_sem, gt_inst)
    if ps.shape != gs.shape:
        raise ParameterError("prediction and ground truth must be equal length")
    pred_segs = _segments(ps, pi, stuff)
    gt_segs = _segments(gs, gi, stuff)
    classes = sorted(
        {c for c, _ in pred_segs} | {c for c, _ in gt_segs}
    )
    report = PanopticReport()
    pq_sum = sq_sum = rq_sum = 0.0
    th_sum, th_n, st_sum, st_n = 0.0, 0, 0.0, 0
    for cls in classes:
        preds = {k: v for (c, k), v in pred_segs.items() if c == cls}
        gts = {k: v for (c, k), v in gt_segs.items() if c == cls}
        cands = []
        for gk, gsel in gts.items():
            gset = set(gsel.tolist())
            for pk, psel in preds.items():
                inter = len(gset.intersection(psel.tolist()))
                if inter == 0:
                    continue
                union = len(gsel) + len(psel) - inter
                iou = inter / union
                if iou > MATCH_IOU:
                    cands.append((iou, gk, pk))
        cands.sort(key=lambda t: (-t[0], t[1], t[2]))
        matched_gt: set[int] = set()
        matched_pred: set[int] = set()
        ious = []
        for iou, gk, pk in cands:
            if gk in matched_gt or pk in matched_pred:
                continue
            matched_gt.add(gk)
            matched_pred.add(pk)
            ious.append(iou)
        tp = len(ious)
        fp = len(preds) - tp
        fn = len(gts) - tp
        denom = tp + 0.5 * fp + 0.5 * fn
        pq = sum(ious) / denom if denom > 0 else 0.0
        sq = sum(ious) / tp if tp > 0 else 0.0
        rq = tp / denom if denom > 0 else 0.0
        report.per_class[cls] = {
            "pq": pq,
            "sq": sq,
            "rq": rq,
            "tp": tp,
            "fp": fp,
            "fn": fn,
        }
        pq_sum += pq
        sq_sum += sq
        rq_sum += rq
        if cls in stuff:
            st_sum += pq
            st_n += 1
        else:
            th_sum += pq
            th_n += 1
    n = len(classes)
    report.pq = pq_sum / n if n else 0.0
    report.sq = sq_sum / n if n else 0.0
    report.rq = rq_sum / n if n else 0.0
    report.pq_things = th_sum / th_n if th_n else 0.0
    report.pq_stuff = st_sum / st_n if st_n else 0.0
    report.miou = mean_iou(ps, gs)
    for cls in classes:
        row = report.per_class[cls]
        row["iou"] = class_iou(ps, gs, cls)
    return report


def class_iou(pred_sem: np.ndarray, gt_sem: np.ndarray, cls: int) -> float:
    p = np.asarray(pred_sem) == cls
    g = np.asarray(gt_sem) == cls
    union = (p | g).sum()
    return float((p & g).sum() / union) if union else 0.0


def mean_iou(pred_sem: np.ndarray, gt_sem: np.ndarray) -> float:
    ps = np.asarray(pred_sem)
    gs = np.asarray(gt_sem)
    classes = sorted(set(np.unique(ps)) | set(np.unique(gs)))
    classes = [c for c in classes if c != 0]
    if not classes:
        return 0.0
    return float(np.mean([class_iou(ps, gs, c) for c in classes]))


# ---------------------------------------------------------------------------
# Tracking score


@dataclass
class TrackingReport:
    score: float
    s_assoc: float
    s_cls: float

    def summary(self) -> str:
        return (
            f"LSTQ    {self.score:.4f}\n"
            f"S_assoc {self.s_assoc:.4f}\n"
            f"S_cls   {self.s_cls:.4f}"
        )


def lstq(
    pred_frames: list[tuple[np.ndarray, np.ndarray]],
    gt_frames: list[tuple[np.ndarray, np.ndarray]],
) -> TrackingReport:
    """Geometric mean of semantic quality and instance association quality.

    The association term treats every nonzero instance id as one
    spatio-temporal point set spanning the sequence:
    S_assoc = mean over gt tracks t of (1/|t|) * sum over predicted tracks s
    overlapping t of |s cap t| * IoU(s, t). The semantic term is the mean
    class IoU over all points. Both are class-count independent of frame
    boundaries; instance ids must be sequence-global.
    """
    if len(pred_frames) != len(gt_frames):
        raise ParameterError("frame counts differ")
    pred_sem_all, pred_inst_all, gt_sem_all, gt_inst_all = [], [], [], []
    for (ps, pi), (gs, gi) in zip(pred_frames, gt_frames):
        ps, pi = _check_pair(ps, pi)
        gs, gi = _check_pair(gs, gi)
        if ps.shape != gs.shape:
            raise ParameterError("per-frame prediction and gt must align")
        pred_sem_all.append(ps)
        pred_inst_all.append(pi)
        gt_sem_all.append(gs)
        gt_inst_all.append(gi)
    ps = np.concatenate(pred_sem_all) if pred_sem_all else np.empty(0, np.int64)
    pi = np.concatenate(pred_inst_all) if pred_inst_all else np.empty(0, np.int64)
    gs = np.concatenate(gt_sem_all) if gt_sem_all else np.empty(0, np.int64)
    gi = np.concatenate(gt_inst_all) if gt_inst_all else np.empty(0, np.int64)

    s_cls = mean_iou(ps, gs)

    gt_ids, gt_sizes = np.unique(gi[gi != 0], return_counts=True)
    pred_sizes = dict(
        zip(*np.unique(pi[pi != 0], return_counts=True))
    )
    both = (gi != 0) & (pi != 0)
    inter_pairs, inter_counts = (
        np.unique(np.stack([gi[both], pi[both]]), axis=1, return_counts=True)
        if both.any()
        else (np.empty((2, 0), np.int64), np.empty(0, np.int64))
    )
    overlap: dict[int, list[tuple[int, int]]] = {}
    for (g, p), n in zip(inter_pairs.T, inter_counts):
        overlap.setdefault(int(g), []).append((int(p), int(n)))
    if len(gt_ids) == 0:
        s_assoc = 0.0
    else:
        total = 0.0
        for g, g_size in zip(gt_ids, gt_sizes):
            acc = 0.0
            for p, inter in overlap.get(int(g), []):
                union = g_size + pred_sizes[p] - inter
                acc += inter * (inter / union)
            total += acc / g_size
        s_assoc = total / len(gt_ids)
    score = float(np.sqrt(s_assoc * s_cls))
    return TrackingReport(score, float(s_assoc), float(s_cls))
