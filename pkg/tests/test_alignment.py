"""Tests for the rig height/pitch grid search against a domain metric."""

import numpy as np
import pytest

from lidarpreseg.aggregation import VoxelGrid
from lidarpreseg.alignment import (
    image_domain_distance,
    mapped_pixel_count,
    mean_domain_distance,
    optimize_rig,
)
from lidarpreseg.camera import CameraIntrinsics, PseudoCameraRig
from lidarpreseg.descriptors import fit_metric_model
from lidarpreseg.errors import ParameterError
from lidarpreseg.rendering import render_view, rgb_to_gray


def _grid_from_keys(keys, edge, intensity):
    keys = np.asarray(keys, dtype=np.int64).reshape(-1, 3)
    v = len(keys)
    return VoxelGrid(
        edge=float(edge),
        keys=keys,
        centers=(keys.astype(np.float64) + 0.5) * edge,
        intensity=np.asarray(intensity, dtype=np.float64),
        counts=np.ones(v, dtype=np.int64),
        point_voxel=np.arange(v, dtype=np.int64),
        point_provenance=np.zeros((v, 2), dtype=np.int32),
    )


def _blob_grids(rng, count):
    """Voxel clusters 4-8 m ahead with depth spread, so a vertical camera
    move produces differential parallax instead of a pure image shift."""
    grids = []
    for _ in range(count):
        n = int(rng.integers(40, 70))
        pos = np.column_stack(
            [
                rng.uniform(4.0, 8.0, n),
                rng.uniform(-1.2, 1.2, n),
                rng.uniform(0.6, 1.6, n),
            ]
        )
        keys = np.unique(np.floor(pos / 0.2).astype(np.int64), axis=0)
        grids.append(_grid_from_keys(keys, 0.2, rng.uniform(0, 1, len(keys))))
    return grids


_INTR = CameraIntrinsics(fx=80.0, fy=80.0, width=64, height=64)

# Degenerate pitch bounds make the pitch grid the single point 0.0, so only
# the height search can move the rig.
_PINNED_ALPHA = (0.0, 1e-9)


def _fit_model_at(grids, rig, clusters=None):
    images = [rgb_to_gray(render_view(g, rig, rig.primary).rgb) for g in grids]
    k = len(images) if clusters is None else clusters
    return fit_metric_model(images, clusters=k, seed=0)


def test_image_domain_distance_is_model_distance_of_render():
    rng = np.random.default_rng(30)
    grids = _blob_grids(rng, 3)
    rig = PseudoCameraRig(intrinsics=_INTR, n_cameras=1, t=1.0)
    model = _fit_model_at(grids, rig)
    for g in grids:
        want = model.distance(rgb_to_gray(render_view(g, rig, 0).rgb))
        assert image_domain_distance(g, rig, model) == pytest.approx(want)
    per_grid = [image_domain_distance(g, rig, model) for g in grids]
    assert mean_domain_distance(grids, rig, model) == pytest.approx(
        np.mean(per_grid)
    )


def test_fitted_height_is_strict_argmin_of_distance():
    # With clusters == images, every fitted render sits on its own center:
    # distance at the fitted height is 0 and positive anywhere else.
    rng = np.random.default_rng(31)
    grids = _blob_grids(rng, 3)
    rig_true = PseudoCameraRig(
        intrinsics=_INTR, n_cameras=1, t=1.0, alpha_bounds=_PINNED_ALPHA
    )
    model = _fit_model_at(grids, rig_true)
    for g in grids:
        d_true = image_domain_distance(g, rig_true, model)
        assert d_true == pytest.approx(0.0, abs=1e-12)
        for t in [-1.0, 0.0, 0.5, 1.5, 2.0]:
            assert image_domain_distance(g, rig_true.with_params(t=t), model) > 0


def test_optimize_recovers_fitted_height():
    rng = np.random.default_rng(32)
    grids = _blob_grids(rng, 3)
    rig_true = PseudoCameraRig(
        intrinsics=_INTR, n_cameras=1, t=1.0, alpha_bounds=_PINNED_ALPHA
    )
    model = _fit_model_at(grids, rig_true)
    start = rig_true.with_params(t=0.0)
    result = optimize_rig(
        grids, model, start, t_span=2.0, t_step=0.5, alpha_step=1.0,
        batch_size=8, max_rounds=4,
    )
    assert result.rig.t == pytest.approx(1.0, abs=1e-9)
    assert result.converged
    assert result.rounds == 2  # lands in round 1, detects no motion in round 2
    # single batch: accepted means are non-increasing across the run
    assert (np.diff(result.distances) <= 1e-12).all()
    for step in result.steps:
        assert step.mean_distance <= step.mean_distance_before + 1e-12


def test_optimize_converged_start_stops_in_one_round():
    rng = np.random.default_rng(33)
    grids = _blob_grids(rng, 3)
    rig_true = PseudoCameraRig(
        intrinsics=_INTR, n_cameras=1, t=1.0, alpha_bounds=_PINNED_ALPHA
    )
    model = _fit_model_at(grids, rig_true)
    result = optimize_rig(
        grids, model, rig_true, t_span=2.0, t_step=0.5, alpha_step=1.0,
        batch_size=8, max_rounds=4,
    )
    assert result.converged
    assert result.rounds == 1
    assert result.rig.t == pytest.approx(1.0, abs=1e-9)


def test_optimize_respects_max_rounds():
    rng = np.random.default_rng(34)
    grids = _blob_grids(rng, 3)
    rig_true = PseudoCameraRig(
        intrinsics=_INTR, n_cameras=1, t=1.0, alpha_bounds=_PINNED_ALPHA
    )
    model = _fit_model_at(grids, rig_true)
    start = rig_true.with_params(t=0.0)
    result = optimize_rig(
        grids, model, start, t_span=2.0, t_step=0.5, alpha_step=1.0,
        batch_size=8, max_rounds=1,
    )
    assert result.rounds == 1
    assert not result.converged  # the first round still moved a full metre


def test_pitch_search_looks_down_at_low_scene():
    # Scene on the ground, camera 2 m up: pitching down maps more pixels.
    rng = np.random.default_rng(35)
    pos = np.column_stack(
        [
            rng.uniform(4.0, 8.0, 80),
            rng.uniform(-1.5, 1.5, 80),
            rng.uniform(0.0, 0.4, 80),
        ]
    )
    keys = np.unique(np.floor(pos / 0.2).astype(np.int64), axis=0)
    grid = _grid_from_keys(keys, 0.2, rng.uniform(0, 1, len(keys)))
    rig = PseudoCameraRig(intrinsics=_INTR, n_cameras=1, t=2.0, alpha=0.0)
    model = _fit_model_at([grid], rig)
    result = optimize_rig(
        [grid], model, rig, t_span=0.0, t_step=0.5,
        alpha_step=float(np.radians(5.0)), batch_size=8, max_rounds=3,
    )
    assert result.rig.t == pytest.approx(2.0)  # span 0 pins the height
    assert result.rig.alpha < 0.0
    down = mapped_pixel_count(grid, result.rig)
    level = mapped_pixel_count(grid, rig)
    assert down > level


def test_pitch_vote_matches_grid_argmax():
    # Dual route: the accepted pitch equals a direct scan's best grid point.
    rng = np.random.default_rng(36)
    pos = np.column_stack(
        [
            rng.uniform(4.0, 8.0, 80),
            rng.uniform(-1.5, 1.5, 80),
            rng.uniform(0.0, 0.4, 80),
        ]
    )
    keys = np.unique(np.floor(pos / 0.2).astype(np.int64), axis=0)
    grid = _grid_from_keys(keys, 0.2, rng.uniform(0, 1, len(keys)))
    rig = PseudoCameraRig(intrinsics=_INTR, n_cameras=1, t=2.0, alpha=0.0)
    model = _fit_model_at([grid], rig)
    lo, hi = rig.alpha_bounds
    step = float(np.radians(5.0))
    alphas = lo + step * np.arange(int(np.floor((hi - lo) / step + 1e-12)) + 1)
    counts = [mapped_pixel_count(grid, rig.with_params(alpha=a)) for a in alphas]
    best = float(alphas[int(np.argmax(counts))])
    result = optimize_rig(
        [grid], model, rig, t_span=0.0, t_step=0.5, alpha_step=step,
        batch_size=8, max_rounds=3,
    )
    assert result.rig.alpha == pytest.approx(best, abs=1e-12)


def test_optimize_validation():
    rig = PseudoCameraRig(intrinsics=_INTR, n_cameras=1)
    rng = np.random.default_rng(37)
    grids = _blob_grids(rng, 1)
    model = _fit_model_at(grids, rig)
    with pytest.raises(ParameterError):
        optimize_rig([], model, rig)
    with pytest.raises(ParameterError):
        optimize_rig(grids, model, rig, t_step=0.0)
    with pytest.raises(ParameterError):
        optimize_rig(grids, model, rig, alpha_step=-0.1)
    with pytest.raises(ParameterError):
        optimize_rig(grids, model, rig, batch_size=0)
    with pytest.raises(ParameterError):
        mean_domain_distance([], rig, model)
