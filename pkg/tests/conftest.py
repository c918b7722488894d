"""Shared test setup.

Thread caps are set before numpy loads so timing-sensitive tests measure
single-threaded behavior and reductions stay bit-reproducible.
"""

import os

for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np
import pytest

from laaloc import PhantomSpec, Volume, gen_phantom_volume


@pytest.fixture(scope="session")
def straight_phantom():
    """One noiseless straight phantom plus truth, shared by slow tests."""
    return gen_phantom_volume(PhantomSpec(rng_seed=11))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def make_tube_mask(radius_vox: float = 6.0, shape=(40, 24, 24), spacing=(0.5, 0.5, 0.5)):
    """Binary cylinder along z, axis through the (x, y) center."""
    nz, ny, nx = shape
    y, x = np.mgrid[0:ny, 0:nx]
    cx, cy = (nx - 1) / 2.0, (ny - 1) / 2.0
    disk = (x - cx) ** 2 + (y - cy) ** 2 <= radius_vox**2
    data = np.repeat(disk[None, :, :], nz, axis=0).astype(np.float32)
    return Volume(data=data, spacing=spacing)
