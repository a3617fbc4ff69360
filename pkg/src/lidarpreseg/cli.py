"""Command line entry points.

Subcommands:
    ingest      build a sequence manifest from a directory of .bin sweeps
    presegment  run the presegmentation pipeline over a manifest
    serve       start the annotation HTTP service over sequence directories
    eval        score predicted labels against reference labels
    export      render pseudo-images for each keyframe as numbered PNGs
    config      print the default pipeline configuration

Every pipeline parameter can be overridden on the command line with
--set section.key=value (repeatable), mirroring the config file keys.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import evaluation, synthetic
from .errors import PresegError
from .fileio import SequenceManifest, save_manifest
from .pipeline import SEGMENTER_URL_ENV, PipelineConfig, run_presegmentation
from .state import load_label_dir


def _add_set_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one pipeline parameter (repeatable)",
    )


def _load_config(args) -> PipelineConfig:
    if args.config:
        config = PipelineConfig.load(args.config)
    else:
        config = PipelineConfig()
    overrides = list(args.overrides)
    if getattr(args, "manifest", None):
        overrides.append(f"manifest={args.manifest}")
    if getattr(args, "output", None):
        overrides.append(f"output_dir={args.output}")
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    return config.apply_overrides(overrides)


def cmd_ingest(args) -> int:
    names = sorted(n for n in os.listdir(args.points) if n.endswith(".bin"))
    if not names:
        print(f"error: no .bin files under {args.points}", file=sys.stderr)
        return 1
    manifest = SequenceManifest(
        frame_paths=[os.path.join(args.points, n) for n in names],
        pose_path=args.poses,
        name=args.name,
        extra={"gt_labels": args.gt_labels} if args.gt_labels else {},
    )
    save_manifest(manifest, args.output)
    print(f"wrote {args.output}: {len(names)} frames")
    return 0


def cmd_presegment(args) -> int:
    config = _load_config(args)
    if config.manifest is None or config.output_dir is None:
        print("error: manifest and output directory are required", file=sys.stderr)
        return 1

    last = {"stage": None}

    def progress(event):
        if event.stage != last["stage"]:
            last["stage"] = event.stage
            print(f"[{event.fraction:5.1%}] {event.stage}")

    result = run_presegmentation(config, progress=progress)
    stats = result.stats
    print(f"keyframes: {stats['keyframes']}")
    alpha_deg = float(np.degrees(stats["rig"]["alpha"]))
    print(f"rig: t={stats['rig']['t']:.2f} alpha={alpha_deg:.1f} deg")
    print(f"tracks: {stats['tracks']} ground segments: {stats['ground_segments']}")
    print(f"labels: {config.output_dir}/labels tracks: {result.tracks_path}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.root)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_eval(args) -> int:
    pred = load_label_dir(args.pred)
    gt = load_label_dir(args.gt)
    if len(pred) != len(gt):
        print("error: prediction and reference frame counts differ", file=sys.stderr)
        return 1
    pred_inst = [inst.astype(np.int64) for _, inst in pred.frames]
    gt_sem = [sem.astype(np.int64) for sem, _ in gt.frames]
    gt_inst = [inst.astype(np.int64) for _, inst in gt.frames]
    pred_sem, _ = evaluation.semantic_oracle_align(pred_inst, gt_sem)
    stuff = set(int(c) for c in args.stuff.split(",") if c.strip())
    pq = evaluation.panoptic_quality(
        np.concatenate(pred_sem),
        np.concatenate(pred_inst),
        np.concatenate(gt_sem),
        np.concatenate(gt_inst),
        stuff_classes=stuff,
    )
    miou = evaluation.mean_iou(np.concatenate(pred_sem), np.concatenate(gt_sem))
    tracking = evaluation.lstq(
        list(zip(pred_sem, pred_inst)), list(zip(gt_sem, gt_inst))
    )
    print(f"PQ     {pq.pq:.4f}")
    print(f"SQ     {pq.sq:.4f}")
    print(f"RQ     {pq.rq:.4f}")
    print(f"mIoU   {miou:.4f}")
    print(f"LSTQ   {tracking.score:.4f}")
    print(f"S_assoc {tracking.s_assoc:.4f}  S_cls {tracking.s_cls:.4f}")
    return 0


def cmd_export(args) -> int:
    from PIL import Image

    from . import aggregation, alignment, camera, pipeline, rendering
    from .fileio import load_manifest, load_sequence

    config = _load_config(args)
    if config.manifest is None:
        print("error: manifest is required", file=sys.stderr)
        return 1
    manifest = load_manifest(config.manifest)
    frames, poses = load_sequence(manifest)
    agg = config.aggregation
    kidx = [
        k.frame_index
        for k in aggregation.designate_keyframes(
            poses, agg.trans_threshold, agg.rot_threshold_deg
        )
    ]
    grids = []
    for j in kidx:
        sf = aggregation.build_superframe(frames, poses, j, agg.superframe_half_width)
        split = aggregation.split_ground(
            sf, agg.ground_cell, agg.ground_plane_tol,
            agg.normal_max_tilt_deg, agg.detect_ceiling,
        )
        grids.append(aggregation.voxelize(sf, split.object_mask, agg.voxel_edge))
    ali = config.alignment
    intr = ali.intrinsics()
    params = ali.color_params()
    if ali.use_bev:
        rig = camera.bev_rig(intr, height=ali.bev_height)
    else:
        rig = camera.PseudoCameraRig(
            intrinsics=intr, n_cameras=ali.n_cameras,
            t=ali.t_init, alpha=float(np.radians(ali.alpha_init_deg)),
            alpha_bounds=(
                float(np.radians(ali.alpha_bounds_deg[0])),
                float(np.radians(ali.alpha_bounds_deg[1])),
            ),
        )
        motion = camera.dominant_motion_direction(poses, poses[kidx[0]])
        rig = dataclasses.replace(
            rig, primary=camera.select_primary_camera(rig, motion)
        )
        if ali.enabled:
            model = pipeline.obtain_metric_model(config)
            rig = alignment.optimize_rig(
                grids, model, rig,
                t_span=ali.t_span, t_step=ali.t_step,
                alpha_step=float(np.radians(ali.alpha_step_deg)),
                batch_size=ali.batch_size, max_rounds=ali.max_rounds,
                params=params,
            ).rig
    os.makedirs(args.output, exist_ok=True)
    count = 0
    for cam in range(rig.n_cameras):
        cam_dir = os.path.join(args.output, f"cam{cam}")
        os.makedirs(cam_dir, exist_ok=True)
        for pos, grid in enumerate(grids):
            pvmap = rendering.project_voxels(grid, rig, camera=cam)
            image = rendering.pseudo_color(
                pvmap, grid, params, camera=cam, frame=kidx[pos]
            )
            path = os.path.join(cam_dir, f"{pos:06d}.png")
            Image.fromarray(
                (image.rgb * 255.0 + 0.5).astype(np.uint8)
            ).save(path)
            count += 1
    print(f"wrote {count} frames under {args.output}")
    return 0


def cmd_config(args) -> int:
    if args.dump_defaults:
        sys.stdout.write(PipelineConfig().to_yaml())
        return 0
    if args.config:
        sys.stdout.write(PipelineConfig.load(args.config).to_yaml())
        return 0
    print("error: pass --dump-defaults or a config file to echo", file=sys.stderr)
    return 1


def cmd_synth(args) -> int:
    scene = synthetic.generate_sequence(n_frames=args.frames, seed=args.seed)
    synthetic.save_sequence(scene, args.output)
    print(f"wrote {args.frames}-frame synthetic sequence to {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lidarpreseg",
        description="zero-shot LiDAR presegmentation and annotation backend",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build a manifest from .bin sweeps")
    p.add_argument("--points", required=True, help="directory of .bin files")
    p.add_argument("--poses", required=True, help="pose text file")
    p.add_argument("--output", required=True, help="manifest.json path to write")
    p.add_argument("--name", default="sequence")
    p.add_argument("--gt-labels", default=None, help="optional reference label dir")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("presegment", help="run the presegmentation pipeline")
    p.add_argument("--config", default=None, help="YAML pipeline config")
    p.add_argument("--manifest", default=None)
    p.add_argument("--output", default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    _add_set_flag(p)
    p.set_defaults(func=cmd_presegment)

    p = sub.add_parser("serve", help="start the annotation HTTP service")
    p.add_argument("--root", required=True, help="directory of sequence dirs")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("eval", help="score labels against a reference")
    p.add_argument("--pred", required=True, help="predicted label directory")
    p.add_argument("--gt", required=True, help="reference label directory")
    p.add_argument("--stuff", default="1", help="comma list of stuff classes")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", help="render keyframe pseudo-images to PNG")
    p.add_argument("--config", default=None)
    p.add_argument("--manifest", default=None)
    p.add_argument("--output", required=True, help="directory for PNG frames")
    p.add_argument("--seed", type=int, default=None)
    _add_set_flag(p)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("config", help="inspect pipeline configuration")
    p.add_argument("--dump-defaults", action="store_true")
    p.add_argument("--config", default=None, help="config file to echo back")
    p.set_defaults(func=cmd_config)

    p = sub.add_parser("synth", help="generate a synthetic demo sequence")
    p.add_argument("--output", required=True)
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if SEGMENTER_URL_ENV in os.environ and args.command == "presegment":
        print(f"segmenter: remote ({os.environ[SEGMENTER_URL_ENV]})")
    try:
        return args.func(args)
    except PresegError as exc:
        stage = getattr(exc, "stage", None)
        prefix = f"error[{stage}]" if stage else "error"
        print(f"{prefix}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
