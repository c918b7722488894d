"""Generate a synthetic appendage phantom, save it, and reload it.

Walks through the volume container (anisotropic spacing, world coordinates,
JSON+raw file format) and the phantom generator's analytic ground truth.
Outputs land in demos/output/.
"""

import os

import numpy as np

from laaloc import PhantomSpec, gen_phantom_volume, load_volume, save_volume, crop_voi
from laaloc.phantoms import save_truth_json
from laaloc.volume import voxel_to_world

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)


def main():
    spec = PhantomSpec(
        tip_radius=5.5,
        neck_radius=4.0,
        atrium_radius=11.0,
        neck_length=14.0,
        bend_angle=15.0,
        noise_sigma=5.0,
        rng_seed=42,
    )
    volume, truth = gen_phantom_volume(spec)
    print(f"phantom volume: dims={volume.dims}, spacing={volume.spacing} mm")
    print(f"  lumen voxels: {int((volume.data > 50).sum())}")
    print(f"  orifice truth: center={np.round(truth.orifice_center_mm, 2)} mm, "
          f"normal={np.round(truth.orifice_normal, 3)}, "
          f"area={truth.orifice_area_mm2:.1f} mm^2")
    print(f"  tip seed (voxels): {tuple(truth.tip_seed)}")

    base = os.path.join(OUT, "phantom")
    save_volume(volume, base)
    save_truth_json(truth, base + ".truth.json")
    reloaded = load_volume(base)
    assert np.array_equal(reloaded.data, volume.data)
    print(f"saved + reloaded bit-exactly: {base}.json / .raw")

    voi, offset = crop_voi(volume, truth.tip_seed, side_mm=30.0)
    print(f"30 mm VOI around the seed: dims={voi.dims}, offset={tuple(offset)}")
    seed_world = voxel_to_world(volume, truth.tip_seed)
    print(f"seed world position: {np.round(seed_world, 2)} mm")


if __name__ == "__main__":
    main()
