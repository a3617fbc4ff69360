"""Multi-frame accumulation: keyframes, superframes, ground split, voxel grid.

A superframe concatenates a window of frames into the coordinate system of its
center frame, keeping per-point provenance (source frame, source point index)
so labels computed on accumulated geometry can be written back to the exact
source points. Ground is removed per superframe with cell-wise plane fits, and
the remaining object points are voxelized for rendering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .fileio import PointFrame, Pose, relative_pose


@dataclass(frozen=True)
class KeyframeStamp:
    frame_index: int
    pose: Pose


def _rotation_angle(rot: np.ndarray) -> float:
    c = (np.trace(rot) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


def designate_keyframes(
    poses: list[Pose],
    trans_threshold: float = 2.0,
    rot_threshold: float = 10.0,
) -> list[KeyframeStamp]:
    """Pick frames whose pose moved enough since the previous keyframe.

    Frame 0 is always a keyframe. A frame becomes one when its translation
    from the last keyframe exceeds trans_threshold meters, or its relative
    rotation exceeds rot_threshold degrees (both strict).
    """
    if not poses:
        return []
    if trans_threshold <= 0 or rot_threshold <= 0:
        raise ParameterError("keyframe thresholds must be positive")
    keyframes = [KeyframeStamp(0, poses[0])]
    for idx in range(1, len(poses)):
        last = keyframes[-1].pose
        dist = float(np.linalg.norm(poses[idx].translation - last.translation))
        ang = _rotation_angle(last.rotation.T @ poses[idx].rotation)
        if dist > trans_threshold or ang > rot_threshold:
            keyframes.append(KeyframeStamp(idx, poses[idx]))
    return keyframes


@dataclass(frozen=True)
class Superframe:
    """Accumulated window of frames in the center frame's coordinates.

    provenance[i] = (source frame index, source point index) for points[i].
    """

    center_index: int
    half_width: int
    points: np.ndarray  # (M, 3) float64, center-frame coordinates
    intensity: np.ndarray  # (M,) float32, raw sensor values
    provenance: np.ndarray  # (M, 2) int32

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def frame_indices(self) -> np.ndarray:
        return np.unique(self.provenance[:, 0])


def build_superframe(
    frames: list[PointFrame],
    poses: list[Pose],
    center_index: int,
    half_width: int,
) -> Superframe:
    """Accumulate frames [center - half_width, center + half_width].

    The window is clipped to the sequence bounds. Every point is mapped into
    the center frame through the pose chain and tagged with its provenance.
    """
    if len(frames) != len(poses):
        raise ParameterError("frames and poses must align")
    if not 0 <= center_index < len(frames):
        raise ParameterError(
            f"center_index {center_index} out of range [0, {len(frames)})"
        )
    if half_width < 0:
        raise ParameterError("half_width must be >= 0")
    lo = max(0, center_index - half_width)
    hi = min(len(frames) - 1, center_index + half_width)
    pts_out, inten_out, prov_out = [], [], []
    for idx in range(lo, hi + 1):
        frame = frames[idx]
        if len(frame) == 0:
            continue
        if idx == center_index:
            xyz = frame.xyz.astype(np.float64)
        else:
            rel = relative_pose(poses[idx], poses[center_index])
            xyz = rel.transform_points(frame.xyz)
        pts_out.append(xyz)
        inten_out.append(frame.intensity)
        prov = np.empty((len(frame), 2), dtype=np.int32)
        prov[:, 0] = idx
        prov[:, 1] = np.arange(len(frame), dtype=np.int32)
        prov_out.append(prov)
    if pts_out:
        points = np.concatenate(pts_out)
        intensity = np.concatenate(inten_out)
        provenance = np.concatenate(prov_out)
    else:
        points = np.empty((0, 3))
        intensity = np.empty((0,), np.float32)
        provenance = np.empty((0, 2), np.int32)
    for arr in (points, intensity, provenance):
        arr.flags.writeable = False
    return Superframe(center_index, half_width, points, intensity, provenance)


# ---------------------------------------------------------------------------
# Ground split


@dataclass(frozen=True)
class GroundSplit:
    """Boolean partition of a superframe into ground and object points."""

    ground_mask: np.ndarray  # (M,) bool, True = ground (or ceiling)
    cell: float
    planes: dict  # (ix, iy) -> (normal, offset) for accepted cells

    @property
    def object_mask(self) -> np.ndarray:
        return ~self.ground_mask


def _fit_plane(pts: np.ndarray) -> tuple[np.ndarray, float] | None:
    """Least-squares plane through pts; returns (unit normal, offset) with
    normal.z >= 0, or None when degenerate. Plane: normal . x = offset."""
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    # Solve z = a x + b y + c in the centered frame; normal = (-a, -b, 1).
    a = np.column_stack([centered[:, 0], centered[:, 1], np.ones(len(pts))])
    try:
        coef, *_ = np.linalg.lstsq(a, centered[:, 2], rcond=None)
    except np.linalg.LinAlgError:
        return None
    normal = np.array([-coef[0], -coef[1], 1.0])
    norm = np.linalg.norm(normal)
    if not np.isfinite(norm) or norm == 0:
        return None
    normal /= norm
    return normal, float(normal @ centroid + coef[2] / norm)


def split_ground(
    superframe: Superframe,
    cell: float = 1.0,
    plane_tol: float = 0.1,
    normal_max_tilt: float = 15.0,
    detect_ceiling: bool = False,
) -> GroundSplit:
    """Classify each superframe point as ground or object.

    Points are binned into XY cells of the given size. In each cell the
    lowest-z points seed a least-squares plane; when the fitted normal is
    within normal_max_tilt degrees of vertical, every cell point within
    plane_tol of the plane is ground. Cells with fewer than 3 points
    contribute only object points. detect_ceiling repeats the procedure from
    the highest-z side for indoor-style data.
    """
    if cell <= 0:
        raise ParameterError("cell must be positive")
    if plane_tol <= 0:
        raise ParameterError("plane_tol must be positive")
    pts = superframe.points
    ground = np.zeros(len(pts), dtype=bool)
    planes: dict = {}
    if len(pts) == 0:
        return GroundSplit(ground, cell, planes)
    keys = np.floor(pts[:, :2] / cell).astype(np.int64)
    order = np.lexsort((keys[:, 1], keys[:, 0]))
    sorted_keys = keys[order]
    boundaries = np.nonzero(np.any(np.diff(sorted_keys, axis=0) != 0, axis=1))[0] + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [len(order)]])
    cos_limit = np.cos(np.radians(normal_max_tilt))
    for s, e in zip(starts, ends):
        idx = order[s:e]
        if idx.size < 3:
            continue
        cell_pts = pts[idx]
        key = (int(sorted_keys[s, 0]), int(sorted_keys[s, 1]))
        accepted = _split_one_side(
            cell_pts, idx, ground, plane_tol, cos_limit, from_top=False
        )
        if accepted is not None:
            planes[key] = accepted
        if detect_ceiling:
            top = _split_one_side(
                cell_pts, idx, ground, plane_tol, cos_limit, from_top=True
            )
            if top is not None:
                planes[(key[0], key[1], "ceiling")] = top
    ground.flags.writeable = False
    return GroundSplit(ground, cell, planes)


def _split_one_side(cell_pts, idx, ground, plane_tol, cos_limit, from_top):
    z = cell_pts[:, 2]
    extreme = z.max() if from_top else z.min()
    if from_top:
        seed_mask = z >= extreme - plane_tol
    else:
        seed_mask = z <= extreme + plane_tol
    if seed_mask.sum() < 3:
        # Fall back to the 3 most extreme points so thin cells still fit.
        order = np.argsort(z)[::-1] if from_top else np.argsort(z)
        seed_mask = np.zeros(len(z), dtype=bool)
        seed_mask[order[:3]] = True
    fit = _fit_plane(cell_pts[seed_mask])
    if fit is None:
        return None
    normal, offset = fit
    # One refinement pass over the cell's inliers tightens the seed fit.
    dist = np.abs(cell_pts @ normal - offset)
    inliers = dist <= plane_tol
    if inliers.sum() >= 3:
        refit = _fit_plane(cell_pts[inliers])
        if refit is not None:
            normal, offset = refit
            dist = np.abs(cell_pts @ normal - offset)
    if abs(normal[2]) < cos_limit:
        return None
    ground[idx[dist <= plane_tol]] = True
    return normal, offset


# ---------------------------------------------------------------------------
# Voxel grid


@dataclass(frozen=True)
class VoxelGrid:
    """Voxelization of a superframe's object points.

    keys holds integer voxel coordinates (floor(position / edge)). Per input
    object point, point_voxel gives the row in keys it landed in, and
    point_provenance carries its (frame, index) origin, so voxel labels can be
    written back to source points. intensity is the per-voxel mean of
    min-max-normalized superframe intensities; centers is the member mean.
    """

    edge: float
    keys: np.ndarray  # (V, 3) int64
    centers: np.ndarray  # (V, 3) float64
    intensity: np.ndarray  # (V,) float64, in [0, 1]
    counts: np.ndarray  # (V,) int64
    point_voxel: np.ndarray  # (P,) int64
    point_provenance: np.ndarray  # (P, 2) int32

    def __len__(self) -> int:
        return self.keys.shape[0]


def voxelize(
    superframe: Superframe,
    object_mask: np.ndarray,
    edge: float = 0.1,
) -> VoxelGrid:
    """Quantize the masked object points onto a cubic grid of the given edge."""
    if edge <= 0:
        raise ParameterError("voxel edge must be positive")
    mask = np.asarray(object_mask, dtype=bool)
    if mask.shape != (len(superframe),):
        raise ParameterError("object_mask must align with the superframe")
    pts = superframe.points[mask]
    prov = superframe.provenance[mask]
    inten = superframe.intensity.astype(np.float64)
    lo, hi = (inten.min(), inten.max()) if len(inten) else (0.0, 0.0)
    norm = (inten - lo) / (hi - lo) if hi > lo else np.zeros_like(inten)
    norm = norm[mask]
    if len(pts) == 0:
        empty = np.empty
        return VoxelGrid(
            edge,
            empty((0, 3), np.int64),
            empty((0, 3)),
            empty((0,)),
            empty((0,), np.int64),
            empty((0,), np.int64),
            empty((0, 2), np.int32),
        )
    keys = np.floor(pts / edge).astype(np.int64)
    uniq, point_voxel, counts = np.unique(
        keys, axis=0, return_inverse=True, return_counts=True
    )
    point_voxel = point_voxel.reshape(-1)
    centers = np.zeros((len(uniq), 3))
    np.add.at(centers, point_voxel, pts)
    centers /= counts[:, None]
    mean_int = np.zeros(len(uniq))
    np.add.at(mean_int, point_voxel, norm)
    mean_int /= counts
    for arr in (uniq, centers, mean_int, counts, point_voxel):
        arr.flags.writeable = False
    return VoxelGrid(edge, uniq, centers, mean_int, counts, point_voxel, prov.copy())
