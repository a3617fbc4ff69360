"""Lifting 2D masks back to voxels and consolidating them into 4D tracks.

A mask unprojects to the voxels its pixels map to; connected-component
growth splits stray voxels from the main body; bleeding reduction drops
boundary voxels whose depth disagrees with the cluster; 3D NMS merges
duplicate clusters inside one frame; label growth extends labels to adjacent
unlabeled voxels; 4D NMS merges duplicate tracks across frames by the
temporal equivalence ratio; and interframe smoothing ties per-frame labels of
the same physical object together. All consolidation steps only relabel
voxels, they never create or destroy memberships.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .aggregation import VoxelGrid
from .errors import ParameterError
from .rendering import PixelVoxelMap
from .segmenter import SegMask

IOU_MERGE_THRESHOLD = 0.5
CONTAINMENT_MERGE_THRESHOLD = 0.8


def unproject_mask(mask: SegMask | np.ndarray, pvmap: PixelVoxelMap) -> np.ndarray:
    """Sorted unique voxel ids whose rendered pixels fall inside the mask."""
    arr = mask.to_array() if isinstance(mask, SegMask) else np.asarray(mask, bool)
    if arr.shape != pvmap.voxel_id.shape:
        raise ParameterError("mask and pixel map sizes differ")
    ids = pvmap.voxel_id[arr & pvmap.mapped]
    return np.unique(ids)


_NEIGHBOR_OFFSETS = np.array(
    [
        (dx, dy, dz)
        for dx in (-1, 0, 1)
        for dy in (-1, 0, 1)
        for dz in (-1, 0, 1)
        if (dx, dy, dz) != (0, 0, 0)
    ],
    dtype=np.int64,
)


def region_growth(
    voxel_ids: np.ndarray, grid: VoxelGrid
) -> list[np.ndarray]:
    """Split a voxel id set into 26-connected components.

    Components come back sorted by size descending, ties by smallest member
    id, each component's ids ascending.
    """
    ids = np.unique(np.asarray(voxel_ids, dtype=np.int64))
    if ids.size == 0:
        return []
    keys = grid.keys[ids]
    index = {tuple(k): i for i, k in enumerate(keys)}
    seen = np.zeros(len(ids), dtype=bool)
    components = []
    for start in range(len(ids)):
        if seen[start]:
            continue
        seen[start] = True
        comp = [start]
        stack = [start]
        while stack:
            cur = stack.pop()
            base = keys[cur]
            for off in _NEIGHBOR_OFFSETS:
                nb = index.get((base[0] + off[0], base[1] + off[1], base[2] + off[2]))
                if nb is not None and not seen[nb]:
                    seen[nb] = True
                    comp.append(nb)
                    stack.append(nb)
        components.append(np.sort(ids[np.array(comp)]))
    components.sort(key=lambda c: (-len(c), int(c[0])))
    return components


def reduce_bleeding(
    voxel_ids: np.ndarray,
    pvmap: PixelVoxelMap,
    depth_dev: float = 0.5,
    border: int = 2,
) -> np.ndarray:
    """Drop cluster voxels that hug the mask boundary at an outlying depth.

    A voxel is dropped when any of its rendered pixels lies within `border`
    pixels (Chebyshev) of the cluster's pixel-footprint boundary AND its
    depth deviates from the cluster median by more than depth_dev meters.
    If that would remove more than half the cluster, the cluster is returned
    unchanged.
    """
    ids = np.unique(np.asarray(voxel_ids, dtype=np.int64))
    if ids.size == 0:
        return ids
    if depth_dev <= 0 or border < 0:
        raise ParameterError("depth_dev must be > 0 and border >= 0")
    footprint = np.isin(pvmap.voxel_id, ids)
    if not footprint.any():
        return ids
    interior = footprint.copy()
    interior[1:, :] &= footprint[:-1, :]
    interior[:-1, :] &= footprint[1:, :]
    interior[:, 1:] &= footprint[:, :-1]
    interior[:, :-1] &= footprint[:, 1:]
    # raster-edge pixels count as boundary
    interior[0, :] = interior[-1, :] = False
    interior[:, 0] = interior[:, -1] = False
    band = footprint & ~interior
    for _ in range(border):
        grown = band.copy()
        grown[1:, :] |= band[:-1, :]
        grown[:-1, :] |= band[1:, :]
        grown[:, 1:] |= band[:, :-1]
        grown[:, :-1] |= band[:, 1:]
        grown[1:, 1:] |= band[:-1, :-1]
        grown[1:, :-1] |= band[:-1, 1:]
        grown[:-1, 1:] |= band[1:, :-1]
        grown[:-1, :-1] |= band[1:, 1:]
        band = grown & footprint
    near_ids = np.unique(pvmap.voxel_id[band & pvmap.mapped])

    depths = np.full(ids.size, np.nan)
    vis_ids = pvmap.voxel_id[footprint]
    vis_depth = pvmap.depth[footprint]
    pos = np.searchsorted(ids, vis_ids)
    depths[pos] = vis_depth  # constant per voxel, any pixel of it will do
    median = np.nanmedian(depths)
    outlying = np.abs(depths - median) > depth_dev
    near = np.isin(ids, near_ids)
    drop = near & np.where(np.isnan(depths), False, outlying)
    if drop.sum() * 2 > ids.size:
        return ids
    return ids[~drop]


# ---------------------------------------------------------------------------
# Boxes


def voxel_box(voxel_ids: np.ndarray, grid: VoxelGrid) -> np.ndarray:
    """Inclusive AABB of voxel cubes in voxel units: rows (lo, hi)."""
    ids = np.asarray(voxel_ids, dtype=np.int64)
    if ids.size == 0:
        raise ParameterError("box of an empty voxel set is undefined")
    keys = grid.keys[ids]
    return np.stack([keys.min(axis=0).astype(np.float64), keys.max(axis=0) + 1.0])


def box_volume(box: np.ndarray) -> float:
    return float(np.prod(np.maximum(box[1] - box[0], 0.0)))


def box_intersection_volume(a: np.ndarray, b: np.ndarray) -> float:
    lo = np.maximum(a[0], b[0])
    hi = np.minimum(a[1], b[1])
    return float(np.prod(np.maximum(hi - lo, 0.0)))


def boxes_equivalent(
    a: np.ndarray,
    b: np.ndarray,
    iou_threshold: float = IOU_MERGE_THRESHOLD,
    containment_threshold: float = CONTAINMENT_MERGE_THRESHOLD,
) -> bool:
    """Single-frame merge test: box IoU or smaller-box containment."""
    inter = box_intersection_volume(a, b)
    if inter <= 0:
        return False
    va, vb = box_volume(a), box_volume(b)
    union = va + vb - inter
    if union > 0 and inter / union >= iou_threshold:
        return True
    smaller = min(va, vb)
    return smaller > 0 and inter / smaller >= containment_threshold


def nms3d(
    clusters: list[np.ndarray],
    grid: VoxelGrid,
    iou_threshold: float = IOU_MERGE_THRESHOLD,
    containment_threshold: float = CONTAINMENT_MERGE_THRESHOLD,
) -> tuple[list[np.ndarray], list[int]]:
    """Merge same-frame clusters whose boxes nearly coincide.

    Clusters are visited in descending size (ties by input position); each
    one merges into the first kept cluster whose box passes the merge test,
    otherwise it is kept itself. Returns (merged clusters, assignment) where
    assignment[i] is the output index for input cluster i.
    """
    order = sorted(range(len(clusters)), key=lambda i: (-len(clusters[i]), i))
    kept: list[np.ndarray] = []
    kept_boxes: list[np.ndarray] = []
    kept_of_input = [0] * len(clusters)
    for i in order:
        ids = np.unique(np.asarray(clusters[i], dtype=np.int64))
        if ids.size == 0:
            kept_of_input[i] = -1
            continue
        box = voxel_box(ids, grid)
        target = None
        for j, kb in enumerate(kept_boxes):
            if boxes_equivalent(kb, box, iou_threshold, containment_threshold):
                target = j
                break
        if target is None:
            kept.append(ids)
            kept_boxes.append(box)
            kept_of_input[i] = len(kept) - 1
        else:
            kept[target] = np.union1d(kept[target], ids)
            kept_boxes[target] = voxel_box(kept[target], grid)
            kept_of_input[i] = target
    return kept, kept_of_input


def label_growth(grid: VoxelGrid, labels: np.ndarray) -> np.ndarray:
    """Extend labels to adjacent unlabeled voxels by synchronous rounds.

    labels holds one entry per grid voxel, -1 meaning unlabeled. Each round,
    every unlabeled voxel with a labeled 26-neighbor takes the most frequent
    neighbor label (ties to the smallest label id); rounds repeat until no
    unlabeled voxel touches a labeled one. Labeled voxels never change.
    """
    out = np.asarray(labels, dtype=np.int64).copy()
    if out.shape != (len(grid),):
        raise ParameterError("labels must align with the grid")
    index = {tuple(k): i for i, k in enumerate(grid.keys)}
    while True:
        updates: dict[int, int] = {}
        unlabeled = np.nonzero(out < 0)[0]
        for vi in unlabeled:
            base = grid.keys[vi]
            votes: dict[int, int] = {}
            for off in _NEIGHBOR_OFFSETS:
                nb = index.get((base[0] + off[0], base[1] + off[1], base[2] + off[2]))
                if nb is not None and out[nb] >= 0:
                    votes[int(out[nb])] = votes.get(int(out[nb]), 0) + 1
            if votes:
                best = max(votes.items(), key=lambda kv: (kv[1], -kv[0]))[0]
                updates[int(vi)] = best
        if not updates:
            return out
        for vi, lbl in updates.items():
            out[vi] = lbl


# ---------------------------------------------------------------------------
# Tracks


@dataclass
class ObjectTrack:
    """Per-frame voxel id sets (ids index each frame's own grid) with cached
    bounding boxes in voxel units."""

    track_id: int
    frames: dict[int, np.ndarray] = field(default_factory=dict)
    boxes: dict[int, np.ndarray] = field(default_factory=dict)

    def add(self, frame: int, voxel_ids: np.ndarray, grid: VoxelGrid) -> None:
        ids = np.unique(np.asarray(voxel_ids, dtype=np.int64))
        if ids.size == 0:
            return
        if frame in self.frames:
            ids = np.union1d(self.frames[frame], ids)
        self.frames[frame] = ids
        self.boxes[frame] = voxel_box(ids, grid)

    @property
    def size(self) -> int:
        return int(sum(len(v) for v in self.frames.values()))

    @property
    def frame_span(self) -> tuple[int, int]:
        keys = self.frames.keys()
        return min(keys), max(keys)

    def copy(self) -> "ObjectTrack":
        return ObjectTrack(
            self.track_id,
            {f: v.copy() for f, v in self.frames.items()},
            {f: b.copy() for f, b in self.boxes.items()},
        )


@dataclass(frozen=True)
class MergeDecision:
    kept_id: int
    absorbed_id: int
    psi: float


def temporal_equivalence(
    a: ObjectTrack,
    b: ObjectTrack,
    iou_threshold: float = IOU_MERGE_THRESHOLD,
    containment_threshold: float = CONTAINMENT_MERGE_THRESHOLD,
) -> float | None:
    """Ratio of frames where the tracks' boxes pass the single-frame merge
    test to the length of their span overlap.

    The numerator counts frames in the union of both tracks' frame sets
    (frames where either side is absent cannot pass). The denominator is
    min(last_a, last_b) - max(first_a, first_b); when that is not positive
    the ratio is undefined and None is returned. Values above 1 are possible.
    """
    if not a.frames or not b.frames:
        return None
    a0, a1 = a.frame_span
    b0, b1 = b.frame_span
    denom = min(a1, b1) - max(a0, b0)
    if denom <= 0:
        return None
    hits = 0
    for f in set(a.frames) | set(b.frames):
        if f in a.boxes and f in b.boxes and boxes_equivalent(
            a.boxes[f], b.boxes[f], iou_threshold, containment_threshold
        ):
            hits += 1
    return hits / denom


def nms4d(
    tracks: list[ObjectTrack],
    psi_threshold: float = 0.3,
    iou_threshold: float = IOU_MERGE_THRESHOLD,
    containment_threshold: float = CONTAINMENT_MERGE_THRESHOLD,
) -> tuple[list[ObjectTrack], list[MergeDecision]]:
    """Merge duplicate tracks whose temporal equivalence reaches the
    threshold.

    Tracks are scanned largest first (stable: size descending, then id);
    after every merge the merged track is re-evaluated against the rest, and
    scanning repeats until no pair qualifies, so the result is a fixpoint and
    the operation is idempotent. Merged tracks keep the smaller id; per-frame
    voxel sets union and boxes become the union box.
    """
    current = [t.copy() for t in tracks if t.frames]
    decisions: list[MergeDecision] = []
    merged_any = True
    while merged_any:
        merged_any = False
        current.sort(key=lambda t: (-t.size, t.track_id))
        for i in range(len(current)):
            for j in range(i + 1, len(current)):
                psi = temporal_equivalence(
                    current[i], current[j], iou_threshold, containment_threshold
                )
                if psi is None or psi < psi_threshold:
                    continue
                a, b = current[i], current[j]
                keep_id = min(a.track_id, b.track_id)
                for f, ids in b.frames.items():
                    if f in a.frames:
                        a.frames[f] = np.union1d(a.frames[f], ids)
                        lo = np.minimum(a.boxes[f][0], b.boxes[f][0])
                        hi = np.maximum(a.boxes[f][1], b.boxes[f][1])
                        a.boxes[f] = np.stack([lo, hi])
                    else:
                        a.frames[f] = ids
                        a.boxes[f] = b.boxes[f]
                decisions.append(MergeDecision(keep_id, max(a.track_id, b.track_id), psi))
                a.track_id = keep_id
                del current[j]
                merged_any = True
                break
            if merged_any:
                break
    current.sort(key=lambda t: t.track_id)
    return current, decisions


# ---------------------------------------------------------------------------
# Interframe smoothing on restored single-frame labels


class _UnionFind:
    def __init__(self):
        self.parent: dict[int, int] = {}

    def find(self, x: int) -> int:
        self.parent.setdefault(x, x)
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller id wins so final labels are stable
            lo, hi = min(ra, rb), max(ra, rb)
            self.parent[hi] = lo


def interframe_smoothing(
    frame_labels: list[np.ndarray],
    frame_points: list[np.ndarray],
    centroid_tol: float = 0.3,
    side_rel_tol: float = 0.2,
) -> tuple[list[np.ndarray], dict[int, int]]:
    """Merge per-frame instance labels that describe the same object.

    Labels in consecutive frames merge when their world-space centroids are
    within centroid_tol meters and every axis-aligned box side differs
    relatively by at most side_rel_tol. Merges close transitively across the
    sequence; each group is relabeled to its smallest id. Label 0 means
    unlabeled and never participates.
    """
    if len(frame_labels) != len(frame_points):
        raise ParameterError("labels and points must align")
    stats: list[dict[int, tuple[np.ndarray, np.ndarray]]] = []
    for labels, pts in zip(frame_labels, frame_points):
        labels = np.asarray(labels)
        pts = np.asarray(pts, dtype=np.float64)
        if len(labels) != len(pts):
            raise ParameterError("per-frame labels and points must align")
        per: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        for lbl in np.unique(labels):
            if lbl == 0:
                continue
            sel = pts[labels == lbl]
            sides = sel.max(axis=0) - sel.min(axis=0)
            per[int(lbl)] = (sel.mean(axis=0), sides)
        stats.append(per)
    uf = _UnionFind()
    for cur, nxt in zip(stats, stats[1:]):
        for la, (ca, sa) in cur.items():
            for lb, (cb, sb) in nxt.items():
                if la == lb:
                    continue
                if np.linalg.norm(ca - cb) > centroid_tol:
                    continue
                denom = np.maximum(np.maximum(sa, sb), 1e-12)
                if (np.abs(sa - sb) / denom <= side_rel_tol).all():
                    uf.union(la, lb)
    mapping: dict[int, int] = {}
    for per in stats:
        for lbl in per:
            mapping[lbl] = uf.find(lbl)
    out = []
    for labels in frame_labels:
        arr = np.asarray(labels).copy()
        for old, new in mapping.items():
            if old != new:
                arr[np.asarray(labels) == old] = new
        out.append(arr)
    return out, mapping
