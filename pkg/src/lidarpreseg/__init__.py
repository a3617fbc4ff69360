"""Zero-shot LiDAR presegmentation and semi-automatic annotation backend.

The pipeline aggregates sweeps into pose-aligned superframes, splits ground,
voxelizes the rest, renders pseudo-camera images whose viewpoint is tuned
against a frequency-domain metric model, prompts a promptable image segmenter
with two-level cluster seeds, lifts the returned masks back to voxels, and
reconciles per-keyframe objects into sequence-level tracks plus fuzzy ground
segments. The service module exposes the result for interactive annotation.
"""

from .aggregation import (
    GroundSplit,
    KeyframeStamp,
    Superframe,
    VoxelGrid,
    build_superframe,
    designate_keyframes,
    split_ground,
    voxelize,
)
from .alignment import OptimizationResult, OptimizationStep, optimize_rig
from .camera import (
    CameraIntrinsics,
    PseudoCameraRig,
    bev_rig,
    dominant_motion_direction,
    project_points,
    select_primary_camera,
)
from .descriptors import (
    MetricModel,
    fit_metric_model,
    frequency_feature,
    histogram_descriptor,
    kmeans,
    load_corpus_images,
)
from .errors import (
    CorruptRecordError,
    FitError,
    InvalidPoseError,
    JournalConflictError,
    MalformedFileError,
    ParameterError,
    PipelineStageError,
    PoseParseError,
    PresegError,
    PromptInfeasibleError,
    SegmenterProtocolError,
    UnknownIdError,
)
from .evaluation import (
    PanopticReport,
    TrackingReport,
    lstq,
    mean_iou,
    panoptic_quality,
    renumber_instances,
    semantic_oracle_align,
)
from .fileio import (
    LabelMap,
    PointFrame,
    Pose,
    SequenceManifest,
    load_manifest,
    load_sequence,
    pack_labels,
    read_label_file,
    read_point_frame,
    read_pose_file,
    relative_pose,
    save_manifest,
    unpack_labels,
    write_label_file,
    write_point_frame,
    write_pose_file,
)
from .ground import FuzzyPartition, GroundGrid, cell_features, fuzzy_cmeans, rasterize_ground
from .pipeline import (
    PipelineConfig,
    PipelineResult,
    ProgressEvent,
    make_segmenter,
    run_presegmentation,
)
from .prompting import PromptSet, bilevel_prompts, dbscan, propagate_prompts
from .reconstruction import (
    MergeDecision,
    ObjectTrack,
    interframe_smoothing,
    label_growth,
    nms3d,
    nms4d,
    reduce_bleeding,
    region_growth,
    temporal_equivalence,
    unproject_mask,
)
from .rendering import (
    PixelVoxelMap,
    PseudoColorParams,
    PseudoImage,
    depth_edge_response,
    project_voxels,
    pseudo_color,
)
from .segmenter import (
    BaseSegmenter,
    MockSegmenter,
    RemoteSegmenter,
    SegMask,
    SessionHandle,
)
from .state import AnnotationState, replay
from .synthetic import generate_reference_corpus, generate_sequence, save_sequence

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
