"""Pseudo-camera rig geometry and pinhole projection."""

from __future__ import annotations

import numpy as np
import pytest

from lidarpreseg import camera
from lidarpreseg.errors import ParameterError
from lidarpreseg.fileio import Pose


def test_intrinsics_defaults_and_validation():
    intr = camera.CameraIntrinsics(fx=100.0, fy=100.0, width=640, height=480)
    assert intr.cx == 320.0 and intr.cy == 240.0
    with pytest.raises(ParameterError):
        camera.CameraIntrinsics(fx=0.0)
    with pytest.raises(ParameterError):
        camera.CameraIntrinsics(width=0)


def test_rig_yaws_and_convergence_point():
    rig = camera.PseudoCameraRig(n_cameras=4, base_center=(1.0, 2.0, 3.0), t=2.5)
    assert [rig.yaw(k) for k in range(4)] == pytest.approx(
        [0.0, np.pi / 2, np.pi, 3 * np.pi / 2]
    )
    assert np.allclose(rig.convergence_point, [1.0, 2.0, 5.5])
    # all cameras share the convergence point as center
    for k in range(4):
        _, center = rig.world_to_camera(k)
        assert np.allclose(center, [1.0, 2.0, 5.5])


def test_camera_axes_orthonormal_and_pitch_sign():
    rig = camera.PseudoCameraRig(n_cameras=4, alpha=np.radians(-20.0))
    for k in range(4):
        right, down, forward = rig.camera_axes(k)
        mat = np.stack([right, down, forward])
        assert np.allclose(mat @ mat.T, np.eye(3), atol=1e-12)
        # negative alpha pitches the view downward
        assert forward[2] < 0
    level = camera.PseudoCameraRig(alpha=0.0)
    assert level.optical_axis(0) == pytest.approx([1.0, 0.0, 0.0])
    assert level.optical_axis(1)[1] == pytest.approx(1.0)


def test_alpha_bounds_enforced():
    rig = camera.PseudoCameraRig()
    with pytest.raises(ParameterError):
        rig.with_params(alpha=np.radians(-45.0))
    with pytest.raises(ParameterError):
        camera.PseudoCameraRig(alpha_bounds=(0.5, 0.5))
    moved = rig.with_params(t=3.0, alpha=np.radians(-5.0))
    assert moved.t == 3.0 and moved.alpha == pytest.approx(np.radians(-5.0))
    assert rig.t == 0.0  # with_params leaves the original untouched


def test_project_points_center_and_offset():
    intr = camera.CameraIntrinsics(fx=200.0, fy=200.0, width=400, height=300)
    rig = camera.PseudoCameraRig(intrinsics=intr, n_cameras=1, alpha=0.0, t=0.0)
    # camera 0 looks along +x from the origin; a point on the axis lands on
    # the principal point, one offset 0.5 m along -y (image right) moves
    # fx * 0.5 / depth = 20 px, computed by hand
    px, depth = camera.project_points(np.array([5.0, 0.0, 0.0]), rig, 0)
    assert px == pytest.approx([200.0, 150.0])
    assert depth == pytest.approx(5.0)
    px, _ = camera.project_points(np.array([5.0, -0.5, 0.0]), rig, 0)
    assert px == pytest.approx([220.0, 150.0])
    # above the axis moves up the raster (smaller v)
    px, _ = camera.project_points(np.array([5.0, 0.0, 0.5]), rig, 0)
    assert px[1] == pytest.approx(130.0)


def test_project_points_behind_camera():
    rig = camera.PseudoCameraRig(n_cameras=1, alpha=0.0)
    px, depth = camera.project_points(np.array([[-1.0, 0.0, 0.0]]), rig, 0)
    assert depth[0] <= 0 and np.isnan(px[0]).all()


def test_project_points_matches_direct_formula():
    rng = np.random.default_rng(19)
    intr = camera.CameraIntrinsics(fx=320.0, fy=300.0, width=640, height=480)
    rig = camera.PseudoCameraRig(
        intrinsics=intr, n_cameras=4, t=1.5, alpha=np.radians(-12.0)
    )
    pts = rng.uniform(-10, 10, size=(200, 3))
    for cam in range(4):
        rot, center = rig.world_to_camera(cam)
        px, depth = camera.project_points(pts, rig, cam)
        local = (pts - center) @ rot.T
        front = local[:, 2] > 0
        assert np.allclose(depth, local[:, 2], atol=1e-12)
        want_u = intr.fx * local[front, 0] / local[front, 2] + intr.cx
        want_v = intr.fy * local[front, 1] / local[front, 2] + intr.cy
        assert np.allclose(px[front, 0], want_u, atol=1e-9)
        assert np.allclose(px[front, 1], want_v, atol=1e-9)
        assert np.isnan(px[~front]).all()


def test_dominant_motion_direction():
    poses = [Pose.from_rt(np.eye(3), [0.3 * i, 0.0, 0.0]) for i in range(5)]
    d = camera.dominant_motion_direction(poses, poses[0])
    assert d == pytest.approx([1.0, 0.0, 0.0])
    # the same world motion expressed in a rotated center frame is R^T @ x
    yaw = np.radians(90.0)
    rot = np.array(
        [
            [np.cos(yaw), -np.sin(yaw), 0.0],
            [np.sin(yaw), np.cos(yaw), 0.0],
            [0.0, 0.0, 1.0],
        ]
    )
    d_local = camera.dominant_motion_direction(poses, Pose.from_rt(rot, np.zeros(3)))
    assert d_local == pytest.approx(rot.T @ np.array([1.0, 0.0, 0.0]))
    # stationary falls back to +x
    still = [Pose.identity()] * 3
    assert camera.dominant_motion_direction(still, still[0]) == pytest.approx(
        [1.0, 0.0, 0.0]
    )


def test_select_primary_camera():
    rig = camera.PseudoCameraRig(n_cameras=4, alpha=np.radians(-10.0))
    assert camera.select_primary_camera(rig, np.array([1.0, 0.0, 0.0])) == 0
    assert camera.select_primary_camera(rig, np.array([0.0, 1.0, 0.0])) == 1
    assert camera.select_primary_camera(rig, np.array([-1.0, 0.0, 0.0])) == 2
    assert camera.select_primary_camera(rig, np.array([0.0, -1.0, 0.0])) == 3
    with pytest.raises(ParameterError):
        camera.select_primary_camera(rig, np.zeros(3))


def test_bev_rig_looks_straight_down():
    rig = camera.bev_rig(height=30.0)
    assert rig.n_cameras == 1
    assert np.allclose(rig.convergence_point, [0.0, 0.0, 30.0])
    forward = rig.optical_axis(0)
    assert forward == pytest.approx([0.0, 0.0, -1.0], abs=1e-6)
