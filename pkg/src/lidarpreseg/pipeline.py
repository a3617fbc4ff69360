"""End-to-end presegmentation: one call turns a posed sequence into
per-frame instance labels and a track manifest.

Stages run in a fixed order (load, aggregate, align, render, prompt,
segment, reconstruct, restore, ground, write); any failure is re-raised as a
stage-tagged error and no partial output files are left behind. Progress is
reported through a callback with a monotonically non-decreasing overall
fraction.

Configuration is one YAML document with nested sections mirroring the
pipeline stages. Unknown keys anywhere are rejected before any work starts.
The segmenter backend is either the built-in deterministic mock or a remote
service; setting the environment variable LIDARPRESEG_SEGMENTER_URL forces
the remote backend at that URL.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import yaml

from . import synthetic
from .aggregation import (
    build_superframe,
    designate_keyframes,
    split_ground,
    voxelize,
)
from .alignment import OptimizationResult, optimize_rig
from .camera import (
    CameraIntrinsics,
    PseudoCameraRig,
    bev_rig,
    dominant_motion_direction,
    select_primary_camera,
)
from .descriptors import MetricModel, fit_metric_model, load_corpus_images
from .errors import ParameterError, PipelineStageError, PromptInfeasibleError
from .fileio import LabelMap, atomic_write_text, load_manifest, load_sequence
from .ground import cell_features, fuzzy_cmeans, rasterize_ground
from .prompting import bilevel_prompts, propagate_prompts
from .reconstruction import (
    ObjectTrack,
    interframe_smoothing,
    label_growth,
    nms3d,
    nms4d,
    reduce_bleeding,
    region_growth,
    unproject_mask,
)
from .rendering import PseudoColorParams, project_voxels, pseudo_color
from .segmenter import BaseSegmenter, MockSegmenter, RemoteSegmenter

SEGMENTER_URL_ENV = "LIDARPRESEG_SEGMENTER_URL"
TRACKS_FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# Configuration


def _positive(value, name):
    if value <= 0:
        raise ParameterError(f"{name} must be positive")


@dataclass
class SegmenterSection:
    backend: str = "mock"
    url: str | None = None
    flood_tolerance: float = 0.10

    def __post_init__(self):
        if self.backend not in ("mock", "remote"):
            raise ParameterError("segmenter.backend must be 'mock' or 'remote'")
        if self.backend == "remote" and not (
            self.url or os.environ.get(SEGMENTER_URL_ENV)
        ):
            raise ParameterError("segmenter.url required for the remote backend")
        _positive(self.flood_tolerance, "segmenter.flood_tolerance")


@dataclass
class AggregationSection:
    trans_threshold: float = 2.0
    rot_threshold_deg: float = 10.0
    superframe_half_width: int = 10
    ground_cell: float = 1.0
    ground_plane_tol: float = 0.1
    normal_max_tilt_deg: float = 15.0
    detect_ceiling: bool = False
    voxel_edge: float = 0.1

    def __post_init__(self):
        _positive(self.trans_threshold, "aggregation.trans_threshold")
        _positive(self.rot_threshold_deg, "aggregation.rot_threshold_deg")
        if self.superframe_half_width < 0:
            raise ParameterError("aggregation.superframe_half_width must be >= 0")
        _positive(self.ground_cell, "aggregation.ground_cell")
        _positive(self.ground_plane_tol, "aggregation.ground_plane_tol")
        _positive(self.normal_max_tilt_deg, "aggregation.normal_max_tilt_deg")
        _positive(self.voxel_edge, "aggregation.voxel_edge")


@dataclass
class AlignmentSection:
    enabled: bool = True
    use_bev: bool = False
    bev_height: float = 30.0
    metric_model: str | None = None
    corpus_dir: str | None = None
    corpus_images: int = 72
    bins: int = 16
    clusters: int = 64
    n_cameras: int = 4
    image_width: int = 1080
    image_height: int = 720
    focal: float = 540.0
    t_init: float = 2.0
    t_span: float = 4.0
    t_step: float = 0.25
    alpha_init_deg: float = -10.0
    alpha_step_deg: float = 1.0
    alpha_bounds_deg: tuple[float, float] = (-30.0, 10.0)
    batch_size: int = 8
    max_rounds: int = 20
    saturation: float = 0.85
    beta1: float = 0.55
    beta2: float = 0.02

    def __post_init__(self):
        for name in ("bev_height", "focal", "t_step", "alpha_step_deg"):
            _positive(getattr(self, name), f"alignment.{name}")
        for name in ("corpus_images", "bins", "clusters", "n_cameras",
                     "image_width", "image_height", "batch_size", "max_rounds"):
            if getattr(self, name) < 1:
                raise ParameterError(f"alignment.{name} must be >= 1")
        if self.t_span < 0:
            raise ParameterError("alignment.t_span must be >= 0")
        lo, hi = self.alpha_bounds_deg
        if not lo < hi:
            raise ParameterError("alignment.alpha_bounds_deg must be increasing")
        if not lo <= self.alpha_init_deg <= hi:
            raise ParameterError("alignment.alpha_init_deg outside bounds")

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(
            fx=self.focal,
            fy=self.focal,
            width=self.image_width,
            height=self.image_height,
        )

    def color_params(self) -> PseudoColorParams:
        return PseudoColorParams(
            saturation=self.saturation, beta1=self.beta1, beta2=self.beta2
        )


@dataclass
class PromptingSection:
    eps_high: float = 0.5
    min_pts_high: int = 10
    eps_low: float = 1.5
    min_pts_low: int = 5
    k_neg: int = 2
    n_pos: int = 3
    occlusion_tol: float = 0.5

    def __post_init__(self):
        _positive(self.eps_high, "prompting.eps_high")
        _positive(self.eps_low, "prompting.eps_low")
        _positive(self.occlusion_tol, "prompting.occlusion_tol")
        if self.min_pts_high < 1 or self.min_pts_low < 1:
            raise ParameterError("prompting min_pts must be >= 1")
        if self.k_neg < 0:
            raise ParameterError("prompting.k_neg must be >= 0")
        if self.n_pos < 1:
            raise ParameterError("prompting.n_pos must be >= 1")


@dataclass
class ReconstructionSection:
    depth_dev: float = 0.5
    border: int = 2
    min_cluster_voxels: int = 2
    psi_threshold: float = 0.3
    enable_nms4d: bool = True
    enable_smoothing: bool = True
    smoothing_centroid_tol: float = 0.3
    smoothing_side_rel_tol: float = 0.2

    def __post_init__(self):
        _positive(self.depth_dev, "reconstruction.depth_dev")
        if self.border < 0:
            raise ParameterError("reconstruction.border must be >= 0")
        if self.min_cluster_voxels < 1:
            raise ParameterError("reconstruction.min_cluster_voxels must be >= 1")
        if self.psi_threshold < 0:
            raise ParameterError("reconstruction.psi_threshold must be >= 0")
        _positive(self.smoothing_centroid_tol, "reconstruction.smoothing_centroid_tol")
        _positive(self.smoothing_side_rel_tol, "reconstruction.smoothing_side_rel_tol")


@dataclass
class GroundSection:
    cell: float = 0.2
    window: int = 2
    bins: int = 16
    clusters: int = 8
    fuzzifier: float = 2.0
    tol: float = 1e-4
    max_iter: int = 300

    def __post_init__(self):
        _positive(self.cell, "ground.cell")
        if self.window < 0:
            raise ParameterError("ground.window must be >= 0")
        if self.bins < 1 or self.clusters < 1 or self.max_iter < 1:
            raise ParameterError("ground bins/clusters/max_iter must be >= 1")
        if self.fuzzifier <= 1:
            raise ParameterError("ground.fuzzifier must be > 1")
        _positive(self.tol, "ground.tol")


_SECTIONS = {
    "segmenter": SegmenterSection,
    "aggregation": AggregationSection,
    "alignment": AlignmentSection,
    "prompting": PromptingSection,
    "reconstruction": ReconstructionSection,
    "ground": GroundSection,
}


def _coerce_value(value, default, path):
    # the field default fixes the expected scalar type
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ParameterError(f"config key '{path}' must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ParameterError(f"config key '{path}' must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParameterError(f"config key '{path}' must be a number")
        return float(value)
    if isinstance(default, tuple):
        if isinstance(value, list):
            value = tuple(value)
        if not isinstance(value, tuple) or len(value) != len(default):
            raise ParameterError(f"config key '{path}' must be a pair")
        return value
    return value


def _build_section(cls, data, path):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ParameterError(f"config section '{path}' must be a mapping")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ParameterError(f"unknown config keys under '{path}': {unknown}")
    kwargs = {}
    for key, value in data.items():
        kwargs[key] = _coerce_value(value, names[key].default, f"{path}.{key}")
    return cls(**kwargs)


@dataclass
class PipelineConfig:
    manifest: str | None = None
    output_dir: str | None = None
    seed: int = 0
    segmenter: SegmenterSection = field(default_factory=SegmenterSection)
    aggregation: AggregationSection = field(default_factory=AggregationSection)
    alignment: AlignmentSection = field(default_factory=AlignmentSection)
    prompting: PromptingSection = field(default_factory=PromptingSection)
    reconstruction: ReconstructionSection = field(default_factory=ReconstructionSection)
    ground: GroundSection = field(default_factory=GroundSection)

    @classmethod
    def from_dict(cls, data: dict | None) -> "PipelineConfig":
        data = dict(data or {})
        kwargs = {}
        for key, seccls in _SECTIONS.items():
            kwargs[key] = _build_section(seccls, data.pop(key, None), key)
        scalars = {"manifest", "output_dir", "seed"}
        unknown = sorted(set(data) - scalars)
        if unknown:
            raise ParameterError(f"unknown config keys: {unknown}")
        for key in scalars & set(data):
            kwargs[key] = data[key]
        if "seed" in kwargs:
            kwargs["seed"] = _coerce_value(kwargs["seed"], 0, "seed")
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = yaml.safe_load(fh)
            except yaml.YAMLError as err:
                raise ParameterError(f"{path}: {err}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["alignment"]["alpha_bounds_deg"] = list(
            doc["alignment"]["alpha_bounds_deg"]
        )
        return doc

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def apply_overrides(self, pairs: list[str]) -> "PipelineConfig":
        """Apply dotted key=value overrides (CLI flags mirror config keys)."""
        doc = self.to_dict()
        for pair in pairs:
            if "=" not in pair:
                raise ParameterError(f"override '{pair}' is not key=value")
            dotted, raw = pair.split("=", 1)
            node = doc
            parts = dotted.split(".")
            for part in parts[:-1]:
                if part not in node or not isinstance(node[part], dict):
                    raise ParameterError(f"unknown config key '{dotted}'")
                node = node[part]
            if parts[-1] not in node:
                raise ParameterError(f"unknown config key '{dotted}'")
            node[parts[-1]] = yaml.safe_load(raw)
        return PipelineConfig.from_dict(doc)


def make_segmenter(config: PipelineConfig) -> BaseSegmenter:
    url = os.environ.get(SEGMENTER_URL_ENV) or config.segmenter.url
    if os.environ.get(SEGMENTER_URL_ENV) or config.segmenter.backend == "remote":
        return RemoteSegmenter(url)
    return MockSegmenter(tolerance=config.segmenter.flood_tolerance)


# ---------------------------------------------------------------------------
# Progress


@dataclass(frozen=True)
class ProgressEvent:
    stage: str
    fraction: float


_STAGE_BANDS = {
    "load": (0.00, 0.04),
    "aggregate": (0.04, 0.22),
    "align": (0.22, 0.40),
    "render": (0.40, 0.46),
    "prompt": (0.46, 0.52),
    "segment": (0.52, 0.66),
    "reconstruct": (0.66, 0.82),
    "restore": (0.82, 0.86),
    "ground": (0.86, 0.96),
    "write": (0.96, 1.00),
}


class _Progress:
    def __init__(self, callback: Callable[[ProgressEvent], None] | None):
        self._cb = callback
        self._last = 0.0

    def emit(self, stage: str, local: float) -> None:
        lo, hi = _STAGE_BANDS[stage]
        overall = lo + (hi - lo) * min(max(local, 0.0), 1.0)
        self._last = max(self._last, overall)
        if self._cb is not None:
            self._cb(ProgressEvent(stage, self._last))


class _StageGuard:
    """Re-raise any stage failure tagged with the stage name."""

    def __init__(self, stage: str, progress: _Progress):
        self.stage = stage
        self.progress = progress

    def __enter__(self):
        self.progress.emit(self.stage, 0.0)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None:
            if isinstance(exc, PipelineStageError):
                return False
            raise PipelineStageError(self.stage, exc) from exc
        self.progress.emit(self.stage, 1.0)
        return False


# ---------------------------------------------------------------------------
# Result


@dataclass
class PipelineResult:
    config: PipelineConfig
    keyframe_indices: list[int]
    rig: PseudoCameraRig
    optimization: OptimizationResult | None
    labels: LabelMap
    tracks: dict
    label_paths: list[str]
    tracks_path: str | None
    stats: dict = field(default_factory=dict)


def obtain_metric_model(config: PipelineConfig) -> MetricModel:
    """Load, fit-from-directory, or fit-from-reference-renders, in that order."""
    al = config.alignment
    if al.metric_model:
        return MetricModel.load(al.metric_model)
    if al.corpus_dir:
        images = load_corpus_images(
            al.corpus_dir, crop=(al.image_width, al.image_height)
        )
    else:
        images = synthetic.generate_reference_corpus(
            n_images=al.corpus_images,
            seed=config.seed + 7,
            params=al.color_params(),
        )
    return fit_metric_model(
        images, bins=al.bins, clusters=min(al.clusters, len(images)),
        seed=config.seed,
    )


def _owner_positions(n_frames: int, kidx: list[int]) -> np.ndarray:
    """Nearest keyframe position for every frame (ties to the earlier one)."""
    frames = np.arange(n_frames)[:, None]
    dist = np.abs(frames - np.asarray(kidx)[None, :])
    return np.argmin(dist, axis=1)


def run_presegmentation(
    config: PipelineConfig,
    segmenter: BaseSegmenter | None = None,
    progress: Callable[[ProgressEvent], None] | None = None,
    metric_model: MetricModel | None = None,
) -> PipelineResult:
    """Run every stage and (when output_dir is set) write labels + tracks.

    A caller-supplied segmenter or metric model overrides the config (used by
    tests and by callers that already hold a fitted model).
    """
    if not config.manifest:
        raise ParameterError("config.manifest is required")
    report = _Progress(progress)
    stats: dict = {}

    with _StageGuard("load", report):
        manifest = load_manifest(config.manifest)
        frames, poses = load_sequence(manifest)
        if not frames:
            raise ParameterError("sequence holds no frames")

    agg = config.aggregation
    with _StageGuard("aggregate", report):
        keyframes = designate_keyframes(
            poses, agg.trans_threshold, agg.rot_threshold_deg
        )
        kidx = [k.frame_index for k in keyframes]
        superframes = []
        splits = []
        grids = []
        for n, k in enumerate(kidx):
            sf = build_superframe(frames, poses, k, agg.superframe_half_width)
            split = split_ground(
                sf,
                cell=agg.ground_cell,
                plane_tol=agg.ground_plane_tol,
                normal_max_tilt=agg.normal_max_tilt_deg,
                detect_ceiling=agg.detect_ceiling,
            )
            superframes.append(sf)
            splits.append(split)
            grids.append(voxelize(sf, split.object_mask, edge=agg.voxel_edge))
            report.emit("aggregate", (n + 1) / len(kidx))
        stats["keyframes"] = kidx
        stats["voxels_per_keyframe"] = [len(g) for g in grids]

    al = config.alignment
    with _StageGuard("align", report):
        intr = al.intrinsics()
        params = al.color_params()
        optimization = None
        if al.use_bev:
            rig = bev_rig(intr, height=al.bev_height)
        else:
            rig = PseudoCameraRig(
                intrinsics=intr,
                n_cameras=al.n_cameras,
                t=al.t_init,
                alpha=float(np.radians(al.alpha_init_deg)),
                alpha_bounds=(
                    float(np.radians(al.alpha_bounds_deg[0])),
                    float(np.radians(al.alpha_bounds_deg[1])),
                ),
            )
            motion = dominant_motion_direction(poses, poses[kidx[0]])
            rig = dataclasses.replace(
                rig, primary=select_primary_camera(rig, motion)
            )
            if al.enabled:
                model = metric_model or obtain_metric_model(config)
                optimization = optimize_rig(
                    grids,
                    model,
                    rig,
                    t_span=al.t_span,
                    t_step=al.t_step,
                    alpha_step=float(np.radians(al.alpha_step_deg)),
                    batch_size=al.batch_size,
                    max_rounds=al.max_rounds,
                    params=params,
                )
                rig = optimization.rig
        stats["rig"] = {"t": rig.t, "alpha": rig.alpha, "primary": rig.primary}

    with _StageGuard("render", report):
        maps = {}
        images = {}
        for cam in range(rig.n_cameras):
            for j in range(len(grids)):
                pv = project_voxels(grids[j], rig, cam)
                maps[(cam, j)] = pv
                images[(cam, j)] = pseudo_color(pv, grids[j], params).rgb
            report.emit("render", (cam + 1) / rig.n_cameras)

    pr = config.prompting
    with _StageGuard("prompt", report):
        kposes = [poses[k] for k in kidx]
        pixel_prompts: dict[tuple[int, int, int], np.ndarray] = {}
        next_id = 1
        for j in range(len(kidx)):
            psets = bilevel_prompts(
                grids[j].centers,
                eps_high=pr.eps_high,
                min_pts_high=pr.min_pts_high,
                eps_low=pr.eps_low,
                min_pts_low=pr.min_pts_low,
                k_neg=pr.k_neg,
                n_pos=pr.n_pos,
                id_offset=next_id,
            )
            if psets:
                next_id = max(p.object_id for p in psets) + 1
            neighborhood = [
                i for i in (j - 1, j, j + 1) if 0 <= i < len(kidx)
            ]
            pixel_prompts.update(
                propagate_prompts(
                    psets,
                    kposes,
                    j,
                    neighborhood,
                    rig,
                    maps,
                    occlusion_tol=pr.occlusion_tol,
                )
            )
        stats["prompt_count"] = len(pixel_prompts)

    with _StageGuard("segment", report):
        backend = segmenter or make_segmenter(config)
        masks: dict[tuple[int, int, int], np.ndarray] = {}
        infeasible = 0
        for cam in range(rig.n_cameras):
            cam_prompts = sorted(
                (j, obj, pts)
                for (obj, c, j), pts in pixel_prompts.items()
                if c == cam
            )
            if not cam_prompts:
                continue
            handle = backend.open_session(
                [images[(cam, j)] for j in range(len(kidx))]
            )
            try:
                added = 0
                for j, obj, pts in cam_prompts:
                    try:
                        backend.add_prompt(handle, j, obj, pts)
                        added += 1
                    except PromptInfeasibleError:
                        infeasible += 1
                if added:
                    for m in backend.propagate(handle):
                        masks[(m.object_id, cam, m.frame)] = m.to_array()
            finally:
                backend.close(handle)
            report.emit("segment", (cam + 1) / rig.n_cameras)
        stats["mask_count"] = len(masks)
        stats["infeasible_prompts"] = infeasible

    rc = config.reconstruction
    with _StageGuard("reconstruct", report):
        per_frame: dict[int, list[tuple[int, np.ndarray]]] = {}
        for (obj, cam, j), mask in sorted(masks.items()):
            ids = unproject_mask(mask, maps[(cam, j)])
            if ids.size == 0:
                continue
            for comp in region_growth(ids, grids[j]):
                comp = reduce_bleeding(
                    comp, maps[(cam, j)], depth_dev=rc.depth_dev, border=rc.border
                )
                if comp.size >= rc.min_cluster_voxels:
                    per_frame.setdefault(j, []).append((obj, comp))
        # Every object contributing to a merged cluster keeps it: tracks of
        # one physical object prompted at different keyframes must share
        # frames, or temporal equivalence has no overlap to measure.
        tracks: dict[int, ObjectTrack] = {}
        for j in sorted(per_frame):
            items = per_frame[j]
            merged, assign = nms3d([ids for _, ids in items], grids[j])
            for i, (obj, _) in enumerate(items):
                if assign[i] >= 0:
                    tracks.setdefault(obj, ObjectTrack(obj)).add(
                        j, merged[assign[i]], grids[j]
                    )
        track_list = [tracks[i] for i in sorted(tracks)]
        decisions = []
        if rc.enable_nms4d:
            track_list, decisions = nms4d(track_list, rc.psi_threshold)
        stats["tracks_before_nms4d"] = len(tracks)
        stats["tracks"] = len(track_list)
        stats["nms4d_merges"] = len(decisions)

        voxel_labels = {
            j: np.full(len(grids[j]), -1, dtype=np.int64)
            for j in range(len(grids))
        }
        for t in sorted(track_list, key=lambda t: (-t.size, t.track_id)):
            for j, ids in t.frames.items():
                lbl = voxel_labels[j]
                fresh = ids[lbl[ids] < 0]
                lbl[fresh] = t.track_id
        for j in voxel_labels:
            voxel_labels[j] = label_growth(grids[j], voxel_labels[j])

    with _StageGuard("restore", report):
        owners = _owner_positions(len(frames), kidx)
        inst = [np.zeros(len(f), dtype=np.int64) for f in frames]
        ground_masks = [np.zeros(len(f), dtype=bool) for f in frames]
        for j, grid in enumerate(grids):
            frames_of_j = np.nonzero(owners == j)[0]
            prov = superframes[j].provenance
            rows = np.nonzero(
                np.isin(prov[:, 0], frames_of_j) & splits[j].ground_mask
            )[0]
            gf, gp = prov[rows, 0], prov[rows, 1]
            for f in np.unique(gf):
                ground_masks[f][gp[gf == f]] = True
            vprov = grid.point_provenance
            vsel = np.nonzero(np.isin(vprov[:, 0], frames_of_j))[0]
            labels = voxel_labels[j][grid.point_voxel[vsel]]
            labels = np.where(labels < 0, 0, labels)
            vf, vp = vprov[vsel, 0], vprov[vsel, 1]
            for f in np.unique(vf):
                hit = vf == f
                inst[f][vp[hit]] = labels[hit]

        if rc.enable_smoothing:
            world = [
                poses[f].transform_points(frames[f].xyz)
                for f in range(len(frames))
            ]
            inst, smoothing_map = interframe_smoothing(
                inst,
                world,
                centroid_tol=rc.smoothing_centroid_tol,
                side_rel_tol=rc.smoothing_side_rel_tol,
            )
            stats["smoothing_merges"] = sum(
                1 for k, v in smoothing_map.items() if k != v
            )

    gr = config.ground
    with _StageGuard("ground", report):
        xy_parts, inten_parts, prov_parts = [], [], []
        for f in range(len(frames)):
            sel = np.nonzero(ground_masks[f])[0]
            if sel.size == 0:
                continue
            world = poses[f].transform_points(frames[f].xyz[sel])
            xy_parts.append(world[:, :2])
            inten_parts.append(frames[f].intensity[sel])
            prov = np.empty((sel.size, 2), dtype=np.int64)
            prov[:, 0] = f
            prov[:, 1] = sel
            prov_parts.append(prov)
        object_id_max = int(max((arr.max() for arr in inst), default=0))
        ground_offset = object_id_max + 1
        ground_ids: list[int] = []
        if xy_parts:
            xy = np.concatenate(xy_parts)
            inten = np.concatenate(inten_parts)
            prov = np.concatenate(prov_parts)
            ggrid = rasterize_ground(xy, inten, cell=gr.cell)
            feats = cell_features(ggrid, window=gr.window, bins=gr.bins)
            clusters = min(gr.clusters, len(feats))
            part = fuzzy_cmeans(
                feats,
                clusters=clusters,
                fuzzifier=gr.fuzzifier,
                tol=gr.tol,
                max_iter=gr.max_iter,
                seed=config.seed,
            )
            point_label = ground_offset + part.hard_labels[ggrid.point_cell]
            pf, pp = prov[:, 0], prov[:, 1]
            for f in np.unique(pf):
                hit = pf == f
                inst[f][pp[hit]] = point_label[hit]
            ground_ids = sorted(int(v) for v in np.unique(point_label))
        stats["ground_segments"] = len(ground_ids)

    with _StageGuard("write", report):
        label_map = LabelMap(
            [(np.zeros(len(a), np.uint16), a.astype(np.uint16)) for a in inst]
        )
        tracks_doc = _track_manifest(manifest.name, kidx, inst, ground_offset)
        label_paths: list[str] = []
        tracks_path = None
        if config.output_dir:
            written: list[str] = []
            try:
                os.makedirs(config.output_dir, exist_ok=True)
                label_paths = label_map.save(
                    os.path.join(config.output_dir, "labels")
                )
                written.extend(label_paths)
                tracks_path = os.path.join(config.output_dir, "tracks.json")
                atomic_write_text(
                    tracks_path, json.dumps(tracks_doc, indent=2) + "\n"
                )
                written.append(tracks_path)
            except BaseException:
                for path in written:
                    if os.path.exists(path):
                        os.remove(path)
                raise

    return PipelineResult(
        config=config,
        keyframe_indices=kidx,
        rig=rig,
        optimization=optimization,
        labels=label_map,
        tracks=tracks_doc,
        label_paths=label_paths,
        tracks_path=tracks_path,
        stats=stats,
    )


def _track_manifest(
    name: str, kidx: list[int], inst: list[np.ndarray], ground_offset: int
) -> dict:
    segments: dict[int, dict] = {}
    for f, labels in enumerate(inst):
        ids, counts = np.unique(labels[labels != 0], return_counts=True)
        for sid, n in zip(ids, counts):
            seg = segments.setdefault(
                int(sid),
                {
                    "id": int(sid),
                    "kind": "ground" if sid >= ground_offset else "object",
                    "frames": [],
                    "point_counts": [],
                },
            )
            seg["frames"].append(f)
            seg["point_counts"].append(int(n))
    return {
        "format_version": TRACKS_FORMAT_VERSION,
        "sequence": name,
        "keyframes": list(kidx),
        "segments": [segments[k] for k in sorted(segments)],
    }
