"""Prompt extraction on keyframes and propagation across neighboring frames.

Object voxel centers are clustered twice with DBSCAN: a tight high-density
pass proposes a handful of positive prompts per cluster, and a loose
low-density pass supplies hard negatives, points that travel with the
object's neighborhood but do not belong to its tight cluster. Prompts are 3D
points; they move to neighboring frames through the pose chain and project
into each rig camera, where off-raster and occluded projections are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .camera import PseudoCameraRig, project_points
from .errors import ParameterError
from .fileio import Pose, relative_pose
from .rendering import PixelVoxelMap

NOISE = -1


def dbscan(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Density clustering; returns a label per point, -1 for noise.

    A point is core when its closed eps-ball holds at least min_pts points
    (itself included). Points are visited in index order, so border points
    join the first cluster that reaches them; given fixed input order the
    labeling is deterministic.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ParameterError("points must be 2D")
    if eps <= 0 or min_pts < 1:
        raise ParameterError("eps must be > 0 and min_pts >= 1")
    n = len(pts)
    labels = np.full(n, NOISE, dtype=np.int64)
    if n == 0:
        return labels
    tree = cKDTree(pts)
    neighborhoods = tree.query_ball_point(pts, eps)
    core = np.array([len(nb) >= min_pts for nb in neighborhoods])
    visited = np.zeros(n, dtype=bool)
    cluster = 0
    for i in range(n):
        if visited[i] or not core[i]:
            continue
        visited[i] = True
        labels[i] = cluster
        queue = sorted(neighborhoods[i])
        head = 0
        while head < len(queue):
            j = queue[head]
            head += 1
            if labels[j] == NOISE:
                labels[j] = cluster
            if visited[j] or not core[j]:
                visited[j] = True
                continue
            visited[j] = True
            labels[j] = cluster
            queue.extend(sorted(neighborhoods[j]))
        cluster += 1
    return labels


@dataclass
class PromptSet:
    """One object candidate: positive prompts with optional negatives.

    positive_indices / negative_indices refer to rows of the clustered point
    array; high_members lists the cluster rows the positives came from. The
    first positive is the cluster medoid; the rest spread over the cluster so
    at least one stays visible when the medoid lands on a hidden face.
    """

    object_id: int
    positives: np.ndarray  # (P, 3)
    negatives: np.ndarray  # (K, 3)
    positive_indices: np.ndarray
    negative_indices: np.ndarray
    high_members: np.ndarray
    low_label: int = NOISE
    meta: dict = field(default_factory=dict)


def _farthest_first(candidates: np.ndarray, anchor: np.ndarray, k: int) -> np.ndarray:
    """Indices into candidates chosen by farthest-first traversal from anchor."""
    if k <= 0 or len(candidates) == 0:
        return np.empty(0, dtype=np.int64)
    chosen: list[int] = []
    refs = [anchor]
    d = np.linalg.norm(candidates - anchor, axis=1)
    for _ in range(min(k, len(candidates))):
        pick = int(np.argmax(d))
        chosen.append(pick)
        refs.append(candidates[pick])
        d = np.minimum(d, np.linalg.norm(candidates - candidates[pick], axis=1))
        d[chosen] = -1.0
    return np.array(chosen, dtype=np.int64)


def bilevel_prompts(
    points: np.ndarray,
    eps_high: float = 0.5,
    min_pts_high: int = 10,
    eps_low: float = 1.5,
    min_pts_low: int = 5,
    k_neg: int = 2,
    n_pos: int = 3,
    id_offset: int = 0,
) -> list[PromptSet]:
    """Derive prompts from object voxel centers at one keyframe.

    Each high-density cluster yields positive prompts: the member closest to
    the cluster mean plus up to n_pos - 1 more members spread farthest-first
    (real voxels, so their projections carry real surface depths; spreading
    keeps a prompt usable when some faces are hidden from the cameras). The
    cluster is matched to the low-density cluster holding the majority of its
    members (nearest low center when all members are loose noise), and up to
    k_neg negatives are drawn farthest-first from matched low-cluster points
    outside the high cluster.
    """
    if n_pos < 1:
        raise ParameterError("n_pos must be >= 1")
    pts = np.asarray(points, dtype=np.float64)
    high = dbscan(pts, eps_high, min_pts_high)
    low = dbscan(pts, eps_low, min_pts_low)
    prompts: list[PromptSet] = []
    low_ids = [lbl for lbl in np.unique(low) if lbl != NOISE]
    low_centers = {lbl: pts[low == lbl].mean(axis=0) for lbl in low_ids}
    for lbl in np.unique(high):
        if lbl == NOISE:
            continue
        members = np.nonzero(high == lbl)[0]
        mean = pts[members].mean(axis=0)
        medoid = members[
            int(np.argmin(np.linalg.norm(pts[members] - mean, axis=1)))
        ]
        rest = members[members != medoid]
        extra = rest[_farthest_first(pts[rest], pts[medoid], n_pos - 1)]
        pos_idx = np.concatenate([[medoid], extra]).astype(np.int64)
        member_low = low[members]
        valid = member_low[member_low != NOISE]
        if len(valid):
            counts = np.bincount(valid)
            low_lbl = int(np.argmax(counts))
        elif low_centers:
            dists = {
                ll: np.linalg.norm(c - pts[medoid]) for ll, c in low_centers.items()
            }
            low_lbl = min(dists, key=lambda ll: (dists[ll], ll))
        else:
            low_lbl = NOISE
        if low_lbl != NOISE:
            pool = np.nonzero((low == low_lbl) & (high != lbl))[0]
        else:
            pool = np.empty(0, dtype=np.int64)
        neg_local = _farthest_first(pts[pool], pts[medoid], k_neg)
        neg_idx = pool[neg_local]
        prompts.append(
            PromptSet(
                object_id=id_offset + int(lbl),
                positives=pts[pos_idx].copy(),
                negatives=pts[neg_idx].copy(),
                positive_indices=pos_idx,
                negative_indices=neg_idx,
                high_members=members,
                low_label=int(low_lbl),
            )
        )
    return prompts


def propagate_prompts(
    prompt_sets: list[PromptSet],
    poses: list[Pose],
    keyframe_index: int,
    target_frames: list[int],
    rig: PseudoCameraRig,
    depth_maps: dict[tuple[int, int], PixelVoxelMap],
    occlusion_tol: float = 0.5,
) -> dict[tuple[int, int, int], np.ndarray]:
    """Carry keyframe prompts into neighboring frames and rig cameras.

    Returns {(object_id, camera, frame): (K, 3) int array of x, y, polarity}.
    A projection is kept only when it lands on the raster, hits a mapped
    pixel, and its depth agrees with the rendered depth within occlusion_tol
    meters (both nearer and farther mismatches are treated as occlusion).
    """
    intr = rig.intrinsics
    out: dict[tuple[int, int, int], np.ndarray] = {}
    for frame in target_frames:
        rel = relative_pose(poses[keyframe_index], poses[frame])
        for pset in prompt_sets:
            pts3 = list(pset.positives)
            polarity = [1] * len(pset.positives)
            for neg in pset.negatives:
                pts3.append(neg)
                polarity.append(0)
            local = rel.transform_points(np.asarray(pts3))
            for cam in range(rig.n_cameras):
                key = (cam, frame)
                if key not in depth_maps:
                    continue
                pvmap = depth_maps[key]
                px, depth = project_points(local, rig, cam)
                rows = []
                for k in range(len(local)):
                    if depth[k] <= 0 or not np.isfinite(px[k]).all():
                        continue
                    x = int(np.floor(px[k, 0]))
                    y = int(np.floor(px[k, 1]))
                    if not (0 <= x < intr.width and 0 <= y < intr.height):
                        continue
                    if pvmap.voxel_id[y, x] < 0:
                        continue
                    if abs(float(pvmap.depth[y, x]) - float(depth[k])) > occlusion_tol:
                        continue
                    rows.append((x, y, polarity[k]))
                if any(r[2] == 1 for r in rows):
                    # at least one surviving positive is required; negatives
                    # alone are useless to a promptable segmenter
                    out[(pset.object_id, cam, frame)] = np.array(rows, dtype=np.int64)
    return out
