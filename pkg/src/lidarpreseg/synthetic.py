"""Deterministic synthetic LiDAR sequences with exact ground truth.

The scene is a flat ground plane plus a handful of static axis-aligned boxes,
swept by a sensor translating along +x. Every frame stores sensor-local
points; ground truth labels tag ground as class 1 (instance-less) and each
box as class 2 with a stable instance id. Scenes are fully reproducible from
their parameters, which makes them usable as regression fixtures as well as
demo input.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .aggregation import Superframe, split_ground, voxelize
from .camera import PseudoCameraRig
from .errors import ParameterError
from .fileio import (
    LabelMap,
    PointFrame,
    Pose,
    SequenceManifest,
    save_manifest,
    write_point_frame,
    write_pose_file,
)
from .rendering import PseudoColorParams, render_view, rgb_to_gray

GROUND_CLASS = 1
BOX_CLASS = 2


@dataclass(frozen=True)
class BoxSpec:
    """Axis-aligned box: world center, full side lengths, surface intensity."""

    center: tuple[float, float, float]
    size: tuple[float, float, float]
    intensity: float
    instance_id: int

    def __post_init__(self):
        if min(self.size) <= 0:
            raise ParameterError("box sides must be positive")
        if not 0.0 <= self.intensity <= 1.0:
            raise ParameterError("intensity must lie in [0, 1]")
        if self.instance_id < 1:
            raise ParameterError("instance_id must be >= 1")


def default_boxes() -> list[BoxSpec]:
    """Five boxes with well separated intensities; boxes 2 and 3 stand close
    enough that coarse clustering fuses them while fine clustering does not.

    Centers carry centimeter offsets so surface samples never sit exactly on
    decimeter boundaries; coordinates that quantize onto voxel edges flip
    sides under float32 rounding and shred surfaces into disconnected shreds,
    which no real scan exhibits.
    """
    return [
        BoxSpec((6.03, 5.07, 0.75), (1.6, 1.2, 1.5), 0.30, 1),
        BoxSpec((10.04, -3.96, 0.90), (2.0, 1.6, 1.8), 0.45, 2),
        BoxSpec((12.43, -4.17, 0.75), (1.6, 1.2, 1.5), 0.60, 3),
        BoxSpec((16.06, 6.04, 1.00), (2.4, 1.8, 2.0), 0.75, 4),
        BoxSpec((21.02, -5.93, 0.60), (1.2, 1.2, 1.2), 0.90, 5),
    ]


def box_surface(spec: BoxSpec, step: float = 0.1) -> np.ndarray:
    """Sample the four sides and the top face on a grid of roughly the given
    spacing; the bottom face is never visible to a sensor and is skipped."""
    cx, cy, cz = spec.center
    hx, hy, hz = (s / 2.0 for s in spec.size)

    def axis(half):
        n = max(2, int(round(2 * half / step)) + 1)
        return np.linspace(-half, half, n)

    xs, ys, zs = axis(hx), axis(hy), axis(hz)
    faces = []
    for sign in (-1.0, 1.0):
        gy, gz = np.meshgrid(ys, zs, indexing="ij")
        faces.append(
            np.column_stack(
                [np.full(gy.size, sign * hx), gy.ravel(), gz.ravel()]
            )
        )
        gx, gz = np.meshgrid(xs, zs, indexing="ij")
        faces.append(
            np.column_stack(
                [gx.ravel(), np.full(gx.size, sign * hy), gz.ravel()]
            )
        )
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    faces.append(
        np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, hz)])
    )
    pts = np.concatenate(faces)
    # edge and corner samples land on several faces with bit-identical
    # coordinates (linspace endpoints are exact); keep one copy of each
    pts = np.unique(pts, axis=0)
    return pts + np.array([cx, cy, cz])


def _ground_lattice(extent: tuple[float, float, float, float], step: float):
    # phase offsets keep lattice points off decimeter voxel boundaries
    x0, x1, y0, y1 = extent
    ix = np.arange(int(np.floor(x0 / step)), int(np.ceil(x1 / step)) + 1)
    iy = np.arange(int(np.floor(y0 / step)), int(np.ceil(y1 / step)) + 1)
    gx, gy = np.meshgrid(ix * step + 0.013, iy * step + 0.017, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])


@dataclass
class SyntheticSequence:
    """Generated frames plus everything a scorer needs."""

    frames: list[PointFrame]
    poses: list[Pose]
    labels: LabelMap
    boxes: list[BoxSpec]
    max_range: float
    ground_step: float
    name: str = "synthetic"
    extra: dict = field(default_factory=dict)

    def visible_frames(self, instance_id: int) -> list[int]:
        """Frames whose point cloud contains the given box instance."""
        out = []
        for f, (_, inst) in enumerate(self.labels.frames):
            if (inst == instance_id).any():
                out.append(f)
        return out


def generate_sequence(
    n_frames: int = 40,
    step: float = 0.5,
    max_range: float = 25.0,
    ground_step: float = 0.4,
    surface_step: float = 0.1,
    sensor_height: float = 1.73,
    ground_intensity: float = 0.2,
    boxes: list[BoxSpec] | None = None,
    noise: float = 0.0,
    seed: int = 0,
    name: str = "synthetic",
) -> SyntheticSequence:
    """Build a sequence of a sensor driving +x through the box scene.

    World geometry is static; each frame selects the points within max_range
    (in XY) of the sensor and expresses them in the sensor frame. A box only
    appears in a frame when all of its samples are in range, so per-frame
    visibility is all-or-nothing.
    """
    if n_frames < 1:
        raise ParameterError("n_frames must be >= 1")
    boxes = default_boxes() if boxes is None else list(boxes)
    rng = np.random.default_rng(seed)

    span = step * (n_frames - 1)
    ground = _ground_lattice(
        (-max_range, span + max_range, -max_range, max_range), ground_step
    )
    ground_inten = np.clip(
        ground_intensity
        + 0.05 * np.sin(0.5 * ground[:, 0]) * np.sin(0.5 * ground[:, 1]),
        0.0,
        1.0,
    )
    box_pts = [box_surface(b, surface_step) for b in boxes]
    box_inten = [np.full(len(p), b.intensity) for p, b in zip(box_pts, boxes)]

    frames, poses, labels = [], [], []
    for f in range(n_frames):
        sensor = np.array([step * f, 0.0, sensor_height])
        pose = Pose.from_rt(np.eye(3), sensor)
        sel = (
            np.linalg.norm(ground[:, :2] - sensor[:2], axis=1) <= max_range
        )
        world = [ground[sel]]
        inten = [ground_inten[sel]]
        sem = [np.full(int(sel.sum()), GROUND_CLASS, np.uint16)]
        inst = [np.zeros(int(sel.sum()), np.uint16)]
        for b, pts, bi in zip(boxes, box_pts, box_inten):
            dists = np.linalg.norm(pts[:, :2] - sensor[:2], axis=1)
            if dists.max() > max_range:
                continue
            world.append(pts)
            inten.append(bi)
            sem.append(np.full(len(pts), BOX_CLASS, np.uint16))
            inst.append(np.full(len(pts), b.instance_id, np.uint16))
        xyz_world = np.concatenate(world)
        if noise > 0:
            xyz_world = xyz_world + rng.normal(0.0, noise, xyz_world.shape)
        local = pose.inverse().transform_points(xyz_world)
        pts4 = np.column_stack([local, np.concatenate(inten)]).astype(np.float32)
        frames.append(PointFrame(frame_index=f, points=pts4))
        poses.append(pose)
        labels.append((np.concatenate(sem), np.concatenate(inst)))
    return SyntheticSequence(
        frames=frames,
        poses=poses,
        labels=LabelMap(labels),
        boxes=boxes,
        max_range=max_range,
        ground_step=ground_step,
        name=name,
    )


def save_sequence(seq: SyntheticSequence, root: str) -> str:
    """Write the sequence in on-disk layout; returns the manifest path.

    Layout: velodyne/NNNNNN.bin, poses.txt, labels/NNNNNN.label (ground
    truth), manifest.json.
    """
    os.makedirs(os.path.join(root, "velodyne"), exist_ok=True)
    frame_paths = []
    for frame in seq.frames:
        path = os.path.join(root, "velodyne", f"{frame.frame_index:06d}.bin")
        write_point_frame(frame.points, path)
        frame_paths.append(path)
    pose_path = os.path.join(root, "poses.txt")
    write_pose_file(seq.poses, pose_path)
    seq.labels.save(os.path.join(root, "labels"))
    manifest = SequenceManifest(
        frame_paths=frame_paths,
        pose_path=pose_path,
        name=seq.name,
        extra={"gt_labels": "labels"},
    )
    path = os.path.join(root, "manifest.json")
    save_manifest(manifest, path)
    return path


# ---------------------------------------------------------------------------
# Reference corpus for the rendering-domain model


def reference_boxes(seed: int = 7, count: int = 8) -> list[BoxSpec]:
    """A box layout distinct from default_boxes, for fitting the domain model."""
    rng = np.random.default_rng(seed)
    boxes = []
    for i in range(count):
        angle = 2 * np.pi * i / count
        radius = 7.0 + 4.0 * rng.random()
        size = tuple(1.0 + 1.5 * rng.random(3))
        boxes.append(
            BoxSpec(
                (
                    radius * np.cos(angle),
                    radius * np.sin(angle),
                    # a few centimeters of float keeps the sampled shell off
                    # exact voxel boundaries (see default_boxes)
                    size[2] / 2.0 + 0.033,
                ),
                size,
                float(0.15 + 0.7 * rng.random()),
                i + 1,
            )
        )
    return boxes


def reference_object_grid(
    seed: int = 7,
    surface_step: float = 0.1,
    voxel_edge: float = 0.1,
):
    """Voxelized object points of the reference scene (ground removed)."""
    boxes = reference_boxes(seed)
    ground = _ground_lattice((-14, 14, -14, 14), 0.4)
    pts = [ground]
    inten = [np.full(len(ground), 0.2)]
    for b in boxes:
        surf = box_surface(b, surface_step)
        pts.append(surf)
        inten.append(np.full(len(surf), b.intensity))
    xyz = np.concatenate(pts)
    intensity = np.concatenate(inten).astype(np.float32)
    prov = np.zeros((len(xyz), 2), np.int32)
    prov[:, 1] = np.arange(len(xyz))
    for arr in (xyz, intensity, prov):
        arr.flags.writeable = False
    sf = Superframe(0, 0, xyz, intensity, prov)
    split = split_ground(sf)
    return voxelize(sf, split.object_mask, edge=voxel_edge)


def generate_reference_corpus(
    n_images: int = 72,
    seed: int = 7,
    params: PseudoColorParams | None = None,
    use_numba: bool | None = None,
) -> list[np.ndarray]:
    """Gray renders of the reference scene from mid-height tilted viewpoints.

    These are the "well-formed" images the domain model is fitted on: the
    rig sweeps a few positions, convergence heights and tilts, and every
    camera view is kept until n_images are collected.
    """
    grid = reference_object_grid(seed)
    positions = [(-3.0, 0.0, 1.7), (0.0, 2.0, 1.7), (2.5, -2.0, 1.7)]
    heights = [1.5, 2.5, 3.5]
    tilts = np.deg2rad([-20.0, -12.0, -6.0])
    images: list[np.ndarray] = []
    for pos in positions:
        for t in heights:
            for alpha in tilts:
                rig = PseudoCameraRig(base_center=pos, t=t, alpha=float(alpha))
                for cam in range(rig.n_cameras):
                    img = render_view(
                        grid, rig, cam, params=params, use_numba=use_numba
                    )
                    images.append(rgb_to_gray(img.rgb))
                    if len(images) >= n_images:
                        return images
    return images
