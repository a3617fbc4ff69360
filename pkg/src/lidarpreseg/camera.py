"""Pseudo-camera rig: surround pinhole cameras sharing one convergence point.

World coordinates follow the sensor convention: x forward, y left, z up.
Camera coordinates are the usual pinhole frame: z along the optical axis,
x right, y down; a point projects to pixel coordinates
u = fx * X/Z + cx, v = fy * Y/Z + cy, where (u, v) are continuous and pixel
(i, j) covers [i, i+1) x [j, j+1).

All rig cameras sit at the shared convergence point (so their optical axes
intersect there by construction) and fan out at evenly spaced yaws. The rig
has two free parameters: a height offset t along +z and a pitch alpha applied
to every camera (negative pitch looks down). With the default 4 cameras and a
90 degree horizontal field of view the rig covers the full circle.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ParameterError
from .fileio import Pose


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float = 540.0
    fy: float = 540.0
    width: int = 1080
    height: int = 720
    cx: float | None = None
    cy: float | None = None

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ParameterError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ParameterError("raster size must be at least 1x1")
        if self.cx is None:
            object.__setattr__(self, "cx", self.width / 2.0)
        if self.cy is None:
            object.__setattr__(self, "cy", self.height / 2.0)


def _camera_axes(yaw: float, pitch: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """World-space (right, down, forward) unit axes for a yaw/pitch camera."""
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    forward = np.array([cp * cy, cp * sy, sp])
    right = np.array([sy, -cy, 0.0])
    down = np.cross(forward, right)
    return right, down, forward


@dataclass(frozen=True)
class PseudoCameraRig:
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    n_cameras: int = 4
    base_center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    t: float = 0.0
    alpha: float = 0.0  # radians; negative looks down
    alpha_bounds: tuple[float, float] = (np.radians(-30.0), np.radians(10.0))
    primary: int = 0

    def __post_init__(self):
        if self.n_cameras < 1:
            raise ParameterError("rig needs at least one camera")
        a, b = self.alpha_bounds
        if not a < b:
            raise ParameterError("alpha_bounds must satisfy a < b")
        if not a - 1e-12 <= self.alpha <= b + 1e-12:
            raise ParameterError(
                f"alpha {self.alpha:.4f} outside bounds [{a:.4f}, {b:.4f}]"
            )
        if not 0 <= self.primary < self.n_cameras:
            raise ParameterError("primary camera index out of range")

    @property
    def convergence_point(self) -> np.ndarray:
        c = np.asarray(self.base_center, dtype=np.float64).copy()
        c[2] += self.t
        return c

    def yaw(self, index: int) -> float:
        return 2.0 * np.pi * index / self.n_cameras

    def camera_axes(self, index: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not 0 <= index < self.n_cameras:
            raise ParameterError("camera index out of range")
        return _camera_axes(self.yaw(index), self.alpha)

    def optical_axis(self, index: int) -> np.ndarray:
        return self.camera_axes(index)[2]

    def world_to_camera(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        """Rotation (rows = right, down, forward) and center of camera index."""
        right, down, forward = self.camera_axes(index)
        rot = np.stack([right, down, forward])
        return rot, self.convergence_point

    def with_params(self, t: float | None = None, alpha: float | None = None):
        kwargs = {}
        if t is not None:
            kwargs["t"] = float(t)
        if alpha is not None:
            kwargs["alpha"] = float(alpha)
        return replace(self, **kwargs)


def project_points(
    points: np.ndarray, rig: PseudoCameraRig, camera: int
) -> tuple[np.ndarray, np.ndarray]:
    """Project world points through one rig camera.

    Returns (pixels, depth): continuous (N, 2) pixel coordinates and the
    camera-space depth. Points at or behind the camera plane get depth <= 0
    and NaN pixels; callers filter on depth.
    """
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    rot, center = rig.world_to_camera(camera)
    cam = (pts - center) @ rot.T
    depth = cam[:, 2]
    intr = rig.intrinsics
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.fx * cam[:, 0] / depth + intr.cx
        v = intr.fy * cam[:, 1] / depth + intr.cy
    px = np.column_stack([u, v])
    px[depth <= 0] = np.nan
    if single:
        return px[0], depth[0]
    return px, depth


def dominant_motion_direction(poses: list[Pose], center_pose: Pose) -> np.ndarray:
    """Mean unit translation delta between consecutive poses, expressed in the
    coordinate frame of center_pose. Falls back to +x when stationary."""
    deltas = []
    for prev, cur in zip(poses, poses[1:]):
        d = cur.translation - prev.translation
        n = np.linalg.norm(d)
        if n > 1e-9:
            deltas.append(d / n)
    if not deltas:
        return np.array([1.0, 0.0, 0.0])
    mean = np.mean(deltas, axis=0)
    n = np.linalg.norm(mean)
    if n < 1e-9:
        return np.array([1.0, 0.0, 0.0])
    return center_pose.rotation.T @ (mean / n)


def select_primary_camera(rig: PseudoCameraRig, motion_direction: np.ndarray) -> int:
    """Camera whose optical axis best aligns with the motion direction."""
    d = np.asarray(motion_direction, dtype=np.float64)
    n = np.linalg.norm(d)
    if n == 0:
        raise ParameterError("motion direction must be non-zero")
    d = d / n
    dots = [float(rig.optical_axis(k) @ d) for k in range(rig.n_cameras)]
    return int(np.argmax(dots))


def bev_rig(
    intrinsics: CameraIntrinsics | None = None,
    height: float = 30.0,
    base_center: tuple[float, float, float] = (0.0, 0.0, 0.0),
) -> PseudoCameraRig:
    """Single fixed top-down camera used as an ablation baseline."""
    return PseudoCameraRig(
        intrinsics=intrinsics or CameraIntrinsics(),
        n_cameras=1,
        base_center=base_center,
        t=height,
        alpha=np.radians(-90.0) + 1e-9,
        alpha_bounds=(np.radians(-90.0), np.radians(10.0)),
        primary=0,
    )
