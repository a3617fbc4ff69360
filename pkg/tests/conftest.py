"""Shared fixtures: a small synthetic sequence and one presegmentation run.

The 14-frame scene plus a reduced-resolution pipeline configuration keep the
whole-module fixtures around ten seconds; the acceptance module builds its
own full-resolution 40-frame run.
"""

from __future__ import annotations

import pytest

from lidarpreseg import synthetic
from lidarpreseg.pipeline import PipelineConfig, run_presegmentation

SMOKE_OVERRIDES = {
    "alignment": {
        "image_width": 360,
        "image_height": 240,
        "focal": 180.0,
        "corpus_images": 12,
        "clusters": 6,
        "t_span": 1.0,
        "t_step": 0.5,
        "alpha_step_deg": 5.0,
        "max_rounds": 2,
        "batch_size": 4,
    }
}


def smoke_config(manifest: str, output_dir: str | None, seed: int = 0) -> PipelineConfig:
    doc = {"manifest": manifest, "output_dir": output_dir, "seed": seed}
    doc.update(SMOKE_OVERRIDES)
    return PipelineConfig.from_dict(doc)


@pytest.fixture(scope="session")
def scene14(tmp_path_factory):
    root = tmp_path_factory.mktemp("scene14")
    seq = synthetic.generate_sequence(n_frames=14, seed=0)
    manifest_path = synthetic.save_sequence(seq, str(root))
    return {"root": str(root), "manifest": manifest_path, "sequence": seq}


@pytest.fixture(scope="session")
def preseg14(scene14, tmp_path_factory):
    out = tmp_path_factory.mktemp("preseg14")
    config = smoke_config(scene14["manifest"], str(out))
    result = run_presegmentation(config)
    return {"config": config, "result": result, "output": str(out)}
