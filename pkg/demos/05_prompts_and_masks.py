"""From voxel clusters to pixel prompts to 2D masks.

Object voxel centers are clustered twice: a tight pass finds compact object
candidates, a loose pass groups candidates that probably belong together so
neighbors can serve as negative prompts. Each candidate then projects into
the pseudo-cameras as a handful of positive/negative pixel clicks, and a
promptable segmenter (here the deterministic color-flood mock) turns the
clicks into run-length encoded masks.

Run:  python3 demos/05_prompts_and_masks.py
"""

import numpy as np

from lidarpreseg import synthetic
from lidarpreseg.aggregation import build_superframe, split_ground, voxelize
from lidarpreseg.camera import CameraIntrinsics, PseudoCameraRig
from lidarpreseg.prompting import bilevel_prompts, propagate_prompts
from lidarpreseg.reconstruction import unproject_mask
from lidarpreseg.rendering import project_voxels, pseudo_color
from lidarpreseg.segmenter import MockSegmenter, SegMask

seq = synthetic.generate_sequence(n_frames=10, seed=0)

sf = build_superframe(seq.frames, seq.poses, center_index=5, half_width=5)
split = split_ground(sf)
grid = voxelize(sf, split.object_mask, edge=0.1)
print(f"object grid at frame 5: {len(grid.keys)} voxels")

psets = bilevel_prompts(grid.centers, eps_high=0.5, min_pts_high=10,
                        eps_low=1.5, min_pts_low=5, k_neg=2, n_pos=3)
print(f"\nbi-level clustering found {len(psets)} object candidates:")
for p in psets:
    print(f"  object {p.object_id}: {len(p.high_members)} voxels, "
          f"{len(p.positives)} positive + {len(p.negatives)} negative prompts")

intr = CameraIntrinsics(fx=180.0, fy=180.0, width=360, height=240)
rig = PseudoCameraRig(intrinsics=intr, n_cameras=4, t=2.0,
                      alpha=np.radians(-10.0))

# depth maps and pseudo-images for every camera of the single keyframe
maps = {(cam, 0): project_voxels(grid, rig, cam) for cam in range(4)}
images = {key: pseudo_color(pv, grid).rgb for key, pv in maps.items()}

pixel_prompts = propagate_prompts(psets, [seq.poses[5]], keyframe_index=0,
                                  target_frames=[0], rig=rig,
                                  depth_maps=maps, occlusion_tol=0.5)
print(f"\n{len(pixel_prompts)} (object, camera) prompt groups survive "
      f"projection and the occlusion check")

backend = MockSegmenter(tolerance=0.10)
masks = {}
for cam in range(4):
    cam_prompts = sorted((obj, pts) for (obj, c, f), pts in
                         pixel_prompts.items() if c == cam)
    if not cam_prompts:
        continue
    handle = backend.open_session([images[(cam, 0)]])
    for obj, pts in cam_prompts:
        backend.add_prompt(handle, 0, obj, pts)
    for m in backend.propagate(handle):
        masks[(m.object_id, cam)] = m
    backend.close(handle)

print(f"\nthe mock segmenter returned {len(masks)} masks:")
for (obj, cam), m in sorted(masks.items()):
    frac = m.area / (m.height * m.width)
    print(f"  object {obj} camera {cam}: area {m.area} px "
          f"({100 * frac:.1f}% of raster), {len(m.counts)} RLE runs")
    # the wire format round-trips exactly
    assert SegMask.from_json(m.to_json()) == m
    # the prompt contract: flood fills cover every positive click
    pts = pixel_prompts[(obj, cam, 0)]
    arr = m.to_array()
    pos = pts[pts[:, 2] == 1]
    assert arr[pos[:, 1], pos[:, 0]].all()

obj, cam = sorted(masks)[0]
pset = next(p for p in psets if p.object_id == obj)
ids = unproject_mask(masks[(obj, cam)], maps[(cam, 0)])
recovered = np.intersect1d(ids, pset.high_members)
print(f"\nlifting object {obj}'s camera-{cam} mask back to 3D touches "
      f"{len(ids)} voxels,\n  {len(recovered)} of them from the candidate's "
      f"own cluster of {len(pset.high_members)}")
