"""Greedy search over rig height and pitch.

Two objectives alternate per batch of keyframes: the convergence-point height
offset t moves to minimize the mean distance between rendered views and the
visual-domain model, and the pitch alpha moves to maximize how many pixels
the projection actually covers. Both searches are plain grid scans; the t
update is only accepted when it does not increase the batch-mean distance,
so the reported distance is non-increasing over accepted updates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .aggregation import VoxelGrid
from .camera import PseudoCameraRig
from .descriptors import MetricModel
from .errors import ParameterError
from .rendering import (
    PseudoColorParams,
    project_voxels,
    render_view,
    rgb_to_gray,
)

MAX_ROUNDS = 20


def image_domain_distance(
    grid: VoxelGrid,
    rig: PseudoCameraRig,
    model: MetricModel,
    camera: int | None = None,
    params: PseudoColorParams | None = None,
    use_numba: bool | None = None,
) -> float:
    """Domain-model distance of one rendered view (primary camera default)."""
    cam = rig.primary if camera is None else camera
    image = render_view(grid, rig, cam, params=params, use_numba=use_numba)
    return model.distance(rgb_to_gray(image.rgb))


def mean_domain_distance(
    grids: list[VoxelGrid],
    rig: PseudoCameraRig,
    model: MetricModel,
    camera: int | None = None,
    params: PseudoColorParams | None = None,
    use_numba: bool | None = None,
) -> float:
    if not grids:
        raise ParameterError("need at least one voxel grid")
    return float(
        np.mean(
            [
                image_domain_distance(g, rig, model, camera, params, use_numba)
                for g in grids
            ]
        )
    )


def mapped_pixel_count(
    grid: VoxelGrid,
    rig: PseudoCameraRig,
    camera: int | None = None,
    use_numba: bool | None = None,
) -> int:
    cam = rig.primary if camera is None else camera
    return project_voxels(grid, rig, cam, use_numba=use_numba).mapped_count


@dataclass
class OptimizationStep:
    round_index: int
    batch_start: int
    t: float
    alpha: float
    mean_distance_before: float
    mean_distance: float
    mean_mapped: float
    t_accepted: bool


@dataclass
class OptimizationResult:
    rig: PseudoCameraRig
    steps: list[OptimizationStep] = field(default_factory=list)
    rounds: int = 0
    converged: bool = False

    @property
    def distances(self) -> list[float]:
        return [s.mean_distance for s in self.steps]


def _grid(center: float, span: float, step: float) -> np.ndarray:
    n = int(round(span / step))
    return center + step * np.arange(-n, n + 1)


def _bounded_grid(lo: float, hi: float, step: float) -> np.ndarray:
    count = int(np.floor((hi - lo) / step + 1e-12)) + 1
    return lo + step * np.arange(count)


def optimize_rig(
    keyframe_grids: list[VoxelGrid],
    model: MetricModel,
    rig: PseudoCameraRig,
    t_span: float = 4.0,
    t_step: float = 0.25,
    alpha_step: float = np.radians(1.0),
    batch_size: int = 8,
    max_rounds: int = MAX_ROUNDS,
    params: PseudoColorParams | None = None,
    use_numba: bool | None = None,
) -> OptimizationResult:
    """Alternate height and pitch grid searches over keyframe batches.

    Per batch: every keyframe votes for the grid height minimizing its
    rendered view's domain distance; the votes' mean replaces t only when the
    batch-mean distance does not increase. Pitch votes maximize the mapped
    pixel count and their mean is clamped to the rig's bounds. The search
    stops once a full round moves both parameters by less than one grid step,
    or after max_rounds rounds.
    """
    if not keyframe_grids:
        raise ParameterError("need at least one keyframe voxel grid")
    if t_step <= 0 or alpha_step <= 0 or t_span < 0:
        raise ParameterError("grid steps must be positive")
    if batch_size < 1:
        raise ParameterError("batch_size must be >= 1")

    t_grid = _grid(rig.t, t_span, t_step)
    lo, hi = rig.alpha_bounds
    alpha_grid = _bounded_grid(lo, hi, alpha_step)

    cur = rig
    result = OptimizationResult(rig=cur)
    for rnd in range(max_rounds):
        max_dt = 0.0
        max_da = 0.0
        for start in range(0, len(keyframe_grids), batch_size):
            batch = keyframe_grids[start : start + batch_size]

            def dist(g, r):
                return image_domain_distance(
                    g, r, model, params=params, use_numba=use_numba
                )

            per_t = np.array(
                [
                    [dist(g, cur.with_params(t=t)) for t in t_grid]
                    for g in batch
                ]
            )
            votes = t_grid[np.argmin(per_t, axis=1)]
            t_candidate = float(np.mean(votes))
            base_mean = float(
                np.mean([dist(g, cur) for g in batch])
            )
            cand_rig = cur.with_params(t=t_candidate)
            cand_mean = float(
                np.mean([dist(g, cand_rig) for g in batch])
            )
            accepted = cand_mean <= base_mean + 1e-12
            if accepted:
                max_dt = max(max_dt, abs(t_candidate - cur.t))
                cur = cand_rig
                mean_after_t = cand_mean
            else:
                mean_after_t = base_mean

            per_a = np.array(
                [
                    [
                        mapped_pixel_count(
                            g, cur.with_params(alpha=a), use_numba=use_numba
                        )
                        for a in alpha_grid
                    ]
                    for g in batch
                ]
            )
            a_votes = alpha_grid[np.argmax(per_a, axis=1)]
            a_candidate = float(np.clip(np.mean(a_votes), lo, hi))
            max_da = max(max_da, abs(a_candidate - cur.alpha))
            cur = cur.with_params(alpha=a_candidate)
            mapped_mean = float(
                np.mean(
                    [mapped_pixel_count(g, cur, use_numba=use_numba) for g in batch]
                )
            )
            result.steps.append(
                OptimizationStep(
                    round_index=rnd,
                    batch_start=start,
                    t=cur.t,
                    alpha=cur.alpha,
                    mean_distance_before=base_mean,
                    mean_distance=mean_after_t,
                    mean_mapped=mapped_mean,
                    t_accepted=accepted,
                )
            )
        result.rounds = rnd + 1
        if max_dt < t_step and max_da < alpha_step:
            result.converged = True
            break
    result.rig = cur
    return result
