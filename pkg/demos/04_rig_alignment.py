"""Search the rig height and pitch that make renders look in-domain.

A frequency-descriptor metric model is fitted on a reference corpus of
renders; its nearest-center distance scores how familiar a new render looks.
The optimizer sweeps camera height t (voting by distance) and pitch alpha
(voting by mapped-pixel count) over the keyframe grids in batches until the
votes stop moving. A fixed top-down view serves as the baseline.

Run:  python3 demos/04_rig_alignment.py
"""

import numpy as np

from lidarpreseg import synthetic
from lidarpreseg.aggregation import build_superframe, split_ground, voxelize
from lidarpreseg.alignment import mean_domain_distance, optimize_rig
from lidarpreseg.camera import CameraIntrinsics, PseudoCameraRig, bev_rig
from lidarpreseg.descriptors import fit_metric_model

# small rasters keep this demo fast; the pipeline defaults to 1080x720
intr = CameraIntrinsics(fx=180.0, fy=180.0, width=360, height=240)

print("fitting the metric model on 16 reference renders...")
corpus = synthetic.generate_reference_corpus(n_images=16, seed=7)
model = fit_metric_model(corpus, bins=16, clusters=8, seed=0)
print(f"  descriptor bins: {len(model.edges) - 1}, centers: {len(model.centers)}")

seq = synthetic.generate_sequence(n_frames=20, seed=0)
grids = []
for j in (0, 5, 10, 15):
    sf = build_superframe(seq.frames, seq.poses, j, half_width=10)
    split = split_ground(sf)
    grids.append(voxelize(sf, split.object_mask, edge=0.1))
print(f"optimizing over {len(grids)} keyframe grids")

start = PseudoCameraRig(
    intrinsics=intr, n_cameras=4, t=2.0, alpha=float(np.radians(-10.0))
)
result = optimize_rig(
    grids, model, start,
    t_span=2.0, t_step=0.5,
    alpha_step=float(np.radians(5.0)),
    batch_size=4, max_rounds=3,
)

print(f"\nconverged: {result.converged} after {result.rounds} round(s)")
print(f"  t: {start.t:.2f} -> {result.rig.t:.2f} m")
print(f"  alpha: {np.degrees(start.alpha):.1f} -> "
      f"{np.degrees(result.rig.alpha):.1f} deg")
for step in result.steps:
    print(
        f"  round {step.round_index} batch@{step.batch_start}: "
        f"t={step.t:.2f} alpha={np.degrees(step.alpha):.1f} deg "
        f"distance {step.mean_distance_before:.4f} -> {step.mean_distance:.4f}"
        f" (accepted: {step.t_accepted})"
    )

opt = mean_domain_distance(grids, result.rig, model)
bev = mean_domain_distance(grids, bev_rig(intr), model)
print(f"\nmean domain distance, optimized rig: {opt:.4f}")
print(f"mean domain distance, top-down view:  {bev:.4f}")
print("optimized view is " + ("closer to" if opt <= bev else "further from")
      + " the reference corpus")
