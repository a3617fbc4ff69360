"""Sequence on-disk formats: point frames, poses, labels, manifests.

A sequence is a directory of per-frame point files plus one pose text file and
an optional manifest. Point frames are flat little-endian float32 records of
(x, y, z, intensity). Poses are text lines of 12 floats forming a row-major
3x4 world-from-sensor transform. Labels are one little-endian uint32 per
point: semantic id in the low 16 bits, instance id in the high 16 bits, with
(0, 0) meaning unlabeled.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CorruptRecordError,
    InvalidPoseError,
    MalformedFileError,
    ParameterError,
    PoseParseError,
)

POINT_RECORD_BYTES = 16  # four little-endian float32 per point
_ORTHO_TOL = 1e-3  # max |R^T R - I| accepted for re-orthonormalization
_POSE_TOL = 1e-6  # tolerance enforced on constructed poses


def atomic_write_bytes(path: str, data: bytes) -> None:
    """Write a file so readers never observe a partial write.

    The payload goes to a temporary file in the target directory which is then
    renamed over the destination (rename is atomic on POSIX).
    """
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


@dataclass(frozen=True)
class PointFrame:
    """One sensor sweep: an (N, 4) float32 array of x, y, z, intensity."""

    frame_index: int
    points: np.ndarray
    sensor_id: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float32)
        if pts.ndim != 2 or pts.shape[1] != 4:
            raise ParameterError(f"points must be (N, 4), got {pts.shape}")
        bad = ~np.isfinite(pts).all(axis=1)
        if bad.any():
            idx = int(np.argmax(bad))
            raise CorruptRecordError(
                f"non-finite point record at index {idx}", index=idx
            )
        if self.frame_index < 0:
            raise ParameterError("frame_index must be >= 0")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def intensity(self) -> np.ndarray:
        return self.points[:, 3]

    def __len__(self) -> int:
        return self.points.shape[0]


def read_point_frame(path: str, frame_index: int = 0, sensor_id: int = 0) -> PointFrame:
    """Load one point frame; the point count is the byte length / 16."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) % POINT_RECORD_BYTES != 0:
        raise MalformedFileError(
            f"{path}: size {len(raw)} is not a multiple of {POINT_RECORD_BYTES}"
        )
    pts = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
    try:
        return PointFrame(frame_index=frame_index, points=pts, sensor_id=sensor_id)
    except CorruptRecordError as err:
        raise CorruptRecordError(f"{path}: {err}", index=err.index) from None


def write_point_frame(points: np.ndarray, path: str) -> None:
    pts = np.ascontiguousarray(np.asarray(points, dtype="<f4"))
    if pts.ndim != 2 or pts.shape[1] != 4:
        raise ParameterError(f"points must be (N, 4), got {pts.shape}")
    atomic_write_bytes(path, pts.tobytes())


def _orthonormalize(rot: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(rot)
    fixed = u @ vt
    if np.linalg.det(fixed) < 0:
        u[:, -1] = -u[:, -1]
        fixed = u @ vt
    return fixed


class Pose:
    """Rigid world-from-sensor transform stored as a 4x4 matrix.

    The rotation block must be orthonormal with determinant +1 (checked to
    1e-6) and the bottom row must be exactly (0, 0, 0, 1).
    """

    __slots__ = ("_mat",)

    def __init__(self, matrix: np.ndarray):
        mat = np.asarray(matrix, dtype=np.float64)
        if mat.shape != (4, 4):
            raise ParameterError(f"pose matrix must be 4x4, got {mat.shape}")
        if not np.array_equal(mat[3], [0.0, 0.0, 0.0, 1.0]):
            raise InvalidPoseError("bottom row must be exactly (0, 0, 0, 1)")
        rot = mat[:3, :3]
        err = np.abs(rot.T @ rot - np.eye(3)).max()
        if err > _POSE_TOL or abs(np.linalg.det(rot) - 1.0) > _POSE_TOL:
            raise InvalidPoseError(
                f"rotation not orthonormal with det +1 (max residual {err:.2e})"
            )
        mat = mat.copy()
        mat.flags.writeable = False
        self._mat = mat

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(4))

    @classmethod
    def from_rt(cls, rotation: np.ndarray, translation: np.ndarray) -> "Pose":
        mat = np.eye(4)
        mat[:3, :3] = rotation
        mat[:3, 3] = translation
        return cls(mat)

    @property
    def matrix(self) -> np.ndarray:
        return self._mat

    @property
    def rotation(self) -> np.ndarray:
        return self._mat[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self._mat[:3, 3]

    def inverse(self) -> "Pose":
        rot = self.rotation.T
        mat = np.eye(4)
        mat[:3, :3] = rot
        mat[:3, 3] = -rot @ self.translation
        return Pose(_sanitize(mat))

    def compose(self, other: "Pose") -> "Pose":
        """Return self @ other (apply other first, then self)."""
        return Pose(_sanitize(self._mat @ other._mat))

    def transform_points(self, xyz: np.ndarray) -> np.ndarray:
        pts = np.asarray(xyz, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def __eq__(self, other) -> bool:
        return isinstance(other, Pose) and np.array_equal(self._mat, other._mat)

    def __repr__(self) -> str:
        t = self.translation
        return f"Pose(t=[{t[0]:.3f}, {t[1]:.3f}, {t[2]:.3f}])"


def _sanitize(mat: np.ndarray) -> np.ndarray:
    # Composition and inversion accumulate rounding; snap back to a clean
    # rigid transform so chained products stay valid.
    mat = mat.copy()
    mat[:3, :3] = _orthonormalize(mat[:3, :3])
    mat[3] = (0.0, 0.0, 0.0, 1.0)
    return mat


def relative_pose(from_pose: Pose, to_pose: Pose) -> Pose:
    """Transform taking coordinates of from_pose's frame into to_pose's frame."""
    return to_pose.inverse().compose(from_pose)


def read_pose_file(path: str) -> list[Pose]:
    """Parse a pose text file: one row-major 3x4 transform (12 floats) per line.

    Rotations within 1e-3 of orthonormal are re-orthonormalized; anything
    farther off (or with a non-positive determinant) is rejected.
    """
    poses: list[Pose] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            stripped = line.strip()
            if not stripped:
                continue
            fields = stripped.split()
            if len(fields) != 12:
                raise PoseParseError(
                    f"{path}:{lineno + 1}: expected 12 floats, got {len(fields)}",
                    line=lineno + 1,
                )
            try:
                vals = np.array([float(f) for f in fields], dtype=np.float64)
            except ValueError as err:
                raise PoseParseError(
                    f"{path}:{lineno + 1}: {err}", line=lineno + 1
                ) from None
            if not np.isfinite(vals).all():
                raise PoseParseError(
                    f"{path}:{lineno + 1}: non-finite pose value", line=lineno + 1
                )
            mat = np.eye(4)
            mat[:3, :] = vals.reshape(3, 4)
            rot = mat[:3, :3]
            err_mag = np.abs(rot.T @ rot - np.eye(3)).max()
            if err_mag > _ORTHO_TOL or np.linalg.det(rot) <= 0:
                raise InvalidPoseError(
                    f"{path}:{lineno + 1}: rotation off orthonormal by "
                    f"{err_mag:.2e} (limit {_ORTHO_TOL})"
                )
            mat[:3, :3] = _orthonormalize(rot)
            poses.append(Pose(mat))
    return poses


def write_pose_file(poses: list[Pose], path: str) -> None:
    lines = []
    for pose in poses:
        vals = pose.matrix[:3, :].reshape(-1)
        lines.append(" ".join(f"{v:.12e}" for v in vals))
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Labels


def pack_labels(semantic: np.ndarray, instance: np.ndarray) -> np.ndarray:
    sem = np.asarray(semantic)
    inst = np.asarray(instance)
    if sem.shape != inst.shape:
        raise ParameterError("semantic and instance arrays must match in shape")
    if sem.size and (sem.min() < 0 or sem.max() > 0xFFFF):
        raise ParameterError("semantic ids must fit in 16 bits")
    if inst.size and (inst.min() < 0 or inst.max() > 0xFFFF):
        raise ParameterError("instance ids must fit in 16 bits")
    return (inst.astype(np.uint32) << 16) | sem.astype(np.uint32)


def unpack_labels(words: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w = np.asarray(words, dtype=np.uint32)
    return (w & 0xFFFF).astype(np.uint16), (w >> 16).astype(np.uint16)


def write_label_file(semantic: np.ndarray, instance: np.ndarray, path: str) -> None:
    words = pack_labels(semantic, instance).astype("<u4")
    atomic_write_bytes(path, words.tobytes())


def read_label_file(path: str) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) % 4 != 0:
        raise MalformedFileError(f"{path}: size {len(raw)} is not a multiple of 4")
    return unpack_labels(np.frombuffer(raw, dtype="<u4"))


class LabelMap:
    """Per-frame semantic and instance ids for a whole sequence."""

    def __init__(self, frames: list[tuple[np.ndarray, np.ndarray]]):
        self.frames = []
        for sem, inst in frames:
            sem = np.asarray(sem, dtype=np.uint16)
            inst = np.asarray(inst, dtype=np.uint16)
            if sem.shape != inst.shape:
                raise ParameterError("semantic/instance length mismatch")
            self.frames.append((sem, inst))

    @classmethod
    def empty(cls, counts: list[int]) -> "LabelMap":
        return cls(
            [(np.zeros(n, np.uint16), np.zeros(n, np.uint16)) for n in counts]
        )

    def __len__(self) -> int:
        return len(self.frames)

    def copy(self) -> "LabelMap":
        return LabelMap([(s.copy(), i.copy()) for s, i in self.frames])

    def save(self, directory: str) -> list[str]:
        os.makedirs(directory, exist_ok=True)
        paths = []
        for idx, (sem, inst) in enumerate(self.frames):
            path = os.path.join(directory, f"{idx:06d}.label")
            write_label_file(sem, inst, path)
            paths.append(path)
        return paths

    @classmethod
    def load(cls, directory: str, count: int) -> "LabelMap":
        frames = []
        for idx in range(count):
            frames.append(read_label_file(os.path.join(directory, f"{idx:06d}.label")))
        return cls(frames)


# ---------------------------------------------------------------------------
# Manifest


@dataclass
class SequenceManifest:
    """Names the inputs of one sequence.

    frame_paths and pose_path are stored relative to the manifest's directory
    when saved with save_manifest, and resolved back on load.
    """

    frame_paths: list[str]
    pose_path: str
    sensor_count: int = 1
    timestamps: list[float] | None = None
    name: str = "sequence"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.sensor_count < 1:
            raise ParameterError("sensor_count must be >= 1")
        if self.timestamps is not None and len(self.timestamps) != len(self.frame_paths):
            raise ParameterError("timestamps must align with frame_paths")

    def __len__(self) -> int:
        return len(self.frame_paths)


def save_manifest(manifest: SequenceManifest, path: str) -> None:
    base = os.path.dirname(os.path.abspath(path))
    doc = {
        "name": manifest.name,
        "frames": [os.path.relpath(p, base) for p in manifest.frame_paths],
        "poses": os.path.relpath(manifest.pose_path, base),
        "sensor_count": manifest.sensor_count,
    }
    if manifest.timestamps is not None:
        doc["timestamps"] = list(manifest.timestamps)
    if manifest.extra:
        doc["extra"] = manifest.extra
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def load_manifest(path: str) -> SequenceManifest:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as err:
            raise MalformedFileError(f"{path}: {err}") from None
    for key in ("frames", "poses"):
        if key not in doc:
            raise MalformedFileError(f"{path}: missing '{key}'")
    base = os.path.dirname(os.path.abspath(path))
    return SequenceManifest(
        frame_paths=[os.path.join(base, p) for p in doc["frames"]],
        pose_path=os.path.join(base, doc["poses"]),
        sensor_count=int(doc.get("sensor_count", 1)),
        timestamps=doc.get("timestamps"),
        name=doc.get("name", os.path.basename(base) or "sequence"),
        extra=doc.get("extra", {}),
    )


def load_sequence(manifest: SequenceManifest) -> tuple[list[PointFrame], list[Pose]]:
    """Read every frame and pose named by a manifest, checking they align."""
    poses = read_pose_file(manifest.pose_path)
    if len(poses) != len(manifest.frame_paths):
        raise MalformedFileError(
            f"pose count {len(poses)} does not match "
            f"frame count {len(manifest.frame_paths)}"
        )
    frames = [
        read_point_frame(p, frame_index=i) for i, p in enumerate(manifest.frame_paths)
    ]
    return frames, poses
