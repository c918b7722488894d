"""End to end on a volumetric phantom: extract, localize, refine, compare.

Loads the checkpoint from demo 04 if present (run that first for the
learned localizer; otherwise only the rule baseline runs), then reports
center/orientation/area errors against the analytic truth.
"""

import os

import numpy as np

from laaloc import (
    OrificeResult,
    PhantomSpec,
    PipelineConfig,
    gen_phantom_volume,
    load_checkpoint,
    nearest_centerline_index,
    orifice_metrics,
)
from laaloc.pipeline import extract_pipeline, localize_orifice

OUT = os.path.join(os.path.dirname(__file__), "output")
CKPT = os.path.join(OUT, "demo_policy.ckpt")


def main():
    spec = PhantomSpec(bend_angle=12.0, noise_sigma=5.0, rng_seed=31)
    volume, truth = gen_phantom_volume(spec)
    cfg = PipelineConfig()

    extraction = extract_pipeline(volume, truth.tip_seed, cfg)
    centerline = extraction.centerline
    truth_idx = nearest_centerline_index(centerline, truth.orifice_center_mm)
    print(f"extracted {len(centerline)} centerline points; truth at index {truth_idx}")

    truth_result = OrificeResult(
        index=truth_idx,
        center_mm=truth.orifice_center_mm,
        normal=truth.orifice_normal,
        area_mm2=truth.orifice_area_mm2,
    )

    methods = ["rule"]
    policy = None
    if os.path.exists(CKPT):
        nets, _ = load_checkpoint(CKPT)
        policy = nets["policy"]
        methods.insert(0, "rl")
    else:
        print("no demo checkpoint found; run demo 04 first to add the learned agent")

    for method in methods:
        result = localize_orifice(
            centerline, extraction.mask, method, policy=policy, cfg=cfg,
            rng=np.random.default_rng(5),
        )
        m = orifice_metrics(result, truth_result)
        print(
            f"{method:>4}: index {result.index} (truth {truth_idx}), "
            f"center error {m.center_mm:.2f} mm, "
            f"orientation error {m.orientation_deg:.1f} deg, "
            f"area {result.area_mm2:.1f} vs {truth.orifice_area_mm2:.1f} mm^2"
        )


if __name__ == "__main__":
    main()
