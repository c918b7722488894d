"""Scalar volumes on anisotropic voxel grids, with file I/O and VOI cropping.

Conventions used throughout the package:

* A voxel index is an ``(i, j, k)`` triple with ``i`` along x, ``j`` along y
  and ``k`` along z.
* ``Volume.data`` is stored as a ``(nz, ny, nx)`` array, so voxel
  ``(i, j, k)`` lives at ``data[k, j, i]``.  This matches the on-disk layout
  (x varies fastest) so raw files round-trip without reordering.
* World coordinates (mm): ``world = origin + index * spacing`` per axis.

The on-disk format is a ``<name>.json`` sidecar::

    {"dims": [nx, ny, nz], "spacing_mm": [sx, sy, sz],
     "origin_mm": [ox, oy, oz], "dtype": "f32", "order": "x-fastest"}

next to a ``<name>.raw`` blob of little-endian float32 in x-fastest order.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import BadInputError

__all__ = [
    "Volume",
    "VoxelIndex",
    "load_volume",
    "save_volume",
    "crop_voi",
    "voxel_to_world",
    "world_to_voxel",
]


class VoxelIndex(NamedTuple):
    """Non-negative voxel coordinates, ``i`` along x, ``j`` along y, ``k`` along z."""

    i: int
    j: int
    k: int


@dataclass(frozen=True)
class Volume:
    """A 3D scalar grid with voxel spacing and world origin in mm.

    ``data`` may hold intensities (arbitrary units), distances (mm) or a
    binary mask; dtype is float32 or float64.  Instances are treated as
    immutable after construction.
    """

    data: np.ndarray = field(repr=False)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise BadInputError(f"volume data must be 3D, got shape {data.shape}")
        if min(data.shape) < 1:
            raise BadInputError(f"volume dims must be positive, got {self.dims}")
        if data.dtype not in (np.float32, np.float64):
            data = data.astype(np.float32)
        object.__setattr__(self, "data", data)
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(spacing) != 3 or any(s <= 0 or not np.isfinite(s) for s in spacing):
            raise BadInputError(f"spacing must be 3 positive reals, got {self.spacing}")
        if len(origin) != 3 or any(not np.isfinite(o) for o in origin):
            raise BadInputError(f"origin must be 3 finite reals, got {self.origin}")
        if not np.all(np.isfinite(data)):
            raise BadInputError("volume data contains non-finite values")
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def dims(self) -> tuple[int, int, int]:
        """Grid size as (nx, ny, nz)."""
        nz, ny, nx = self.data.shape
        return (nx, ny, nz)

    def value_at(self, index) -> float:
        i, j, k = index
        return float(self.data[k, j, i])

    def contains(self, index) -> bool:
        nx, ny, nz = self.dims
        i, j, k = index
        return 0 <= i < nx and 0 <= j < ny and 0 <= k < nz

    def with_data(self, data: np.ndarray) -> "Volume":
        """Same grid geometry, different samples."""
        return Volume(data=data, spacing=self.spacing, origin=self.origin)


def voxel_to_world(volume: Volume, index) -> np.ndarray:
    """World-space position (mm) of a voxel center."""
    idx = np.asarray(index, dtype=float)
    return np.asarray(volume.origin) + idx * np.asarray(volume.spacing)


def world_to_voxel(volume: Volume, position_mm) -> VoxelIndex:
    """Nearest voxel index for a world position; must land inside the grid."""
    rel = (np.asarray(position_mm, dtype=float) - np.asarray(volume.origin)) / np.asarray(
        volume.spacing
    )
    idx = np.rint(rel).astype(int)
    vi = VoxelIndex(int(idx[0]), int(idx[1]), int(idx[2]))
    if not volume.contains(vi):
        raise BadInputError(f"position {position_mm} maps to {vi}, outside dims {volume.dims}")
    return vi


def _sidecar_paths(path: str) -> tuple[str, str]:
    base, ext = os.path.splitext(path)
    if ext not in (".json", ".raw", ""):
        base = path
    return base + ".json", base + ".raw"


def save_volume(volume: Volume, path: str) -> None:
    """Write a volume as a JSON sidecar plus little-endian f32 raw blob.

    Data is stored as float32; a float32 volume round-trips bit-exactly.
    """
    header_path, raw_path = _sidecar_paths(path)
    nx, ny, nz = volume.dims
    header = {
        "dims": [nx, ny, nz],
        "spacing_mm": list(volume.spacing),
        "origin_mm": list(volume.origin),
        "dtype": "f32",
        "order": "x-fastest",
    }
    try:
        with open(header_path, "w") as fh:
            json.dump(header, fh)
        # (nz, ny, nx) in C order is exactly x-fastest linear order
        volume.data.astype("<f4").tofile(raw_path)
    except OSError as exc:
        raise BadInputError(f"cannot write volume to {path!r}: {exc}") from exc


def load_volume(path: str) -> Volume:
    """Load a volume written by :func:`save_volume`."""
    header_path, raw_path = _sidecar_paths(path)
    if not os.path.exists(header_path):
        raise BadInputError(f"missing volume header {header_path!r}")
    if not os.path.exists(raw_path):
        raise BadInputError(f"missing volume raw file {raw_path!r}")
    with open(header_path) as fh:
        try:
            header = json.load(fh)
        except json.JSONDecodeError as exc:
            raise BadInputError(f"corrupt volume header {header_path!r}: {exc}") from exc
    try:
        nx, ny, nz = (int(d) for d in header["dims"])
        spacing = tuple(float(s) for s in header["spacing_mm"])
        origin = tuple(float(o) for o in header["origin_mm"])
    except (KeyError, TypeError, ValueError) as exc:
        raise BadInputError(f"invalid volume header {header_path!r}: {exc}") from exc
    if nx <= 0 or ny <= 0 or nz <= 0:
        raise BadInputError(f"non-positive dims {header['dims']} in {header_path!r}")
    raw = np.fromfile(raw_path, dtype="<f4")
    if raw.size != nx * ny * nz:
        raise BadInputError(
            f"raw size mismatch for {raw_path!r}: header implies {nx * ny * nz} "
            f"voxels, file holds {raw.size}"
        )
    data = raw.reshape(nz, ny, nx)
    if not np.all(np.isfinite(data)):
        raise BadInputError(f"non-finite values in {raw_path!r}")
    return Volume(data=data, spacing=spacing, origin=origin)


def crop_voi(volume: Volume, seed, side_mm: float) -> tuple[Volume, VoxelIndex]:
    """Cut a cube of physical side ``side_mm`` centered on ``seed``.

    The window is shifted to stay inside the volume (and truncated per axis
    if the volume itself is smaller), so the seed is always contained.
    Returns the sub-volume plus the offset mapping VOI indices back to the
    parent: ``parent_index = voi_index + offset``.  The sub-volume's origin
    is adjusted so world coordinates agree with the parent volume.
    """
    if not np.isfinite(side_mm) or side_mm <= 0:
        raise BadInputError(f"side_mm must be positive, got {side_mm}")
    seed = VoxelIndex(int(seed[0]), int(seed[1]), int(seed[2]))
    if not volume.contains(seed):
        raise BadInputError(f"seed {seed} outside volume dims {volume.dims}")
    dims = volume.dims
    lo = []
    hi = []
    for axis in range(3):
        n = max(1, int(round(side_mm / volume.spacing[axis])))
        n = min(n, dims[axis])
        start = seed[axis] - n // 2
        start = min(max(start, 0), dims[axis] - n)
        lo.append(start)
        hi.append(start + n)
    sub = volume.data[lo[2] : hi[2], lo[1] : hi[1], lo[0] : hi[0]].copy()
    origin = tuple(
        volume.origin[a] + lo[a] * volume.spacing[a] for a in range(3)
    )
    voi = Volume(data=sub, spacing=volume.spacing, origin=origin)
    return voi, VoxelIndex(lo[0], lo[1], lo[2])
