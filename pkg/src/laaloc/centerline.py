"""Centerline growth by greedy depth-maxima tracking, and the 1D depth profile.

Starting from the tip seed, each step moves to the unvisited 26-neighbor
with the largest depth (distance-to-surface), so the path climbs onto the
medial axis and then follows it through the narrowing into the wide chamber.
The per-point depth sequence is the search space for both the rule-based
and the learned localizer.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import BadInputError, SeedOutsideForegroundError, TrackingStalledError
from .volume import Volume, VoxelIndex, voxel_to_world

__all__ = [
    "TrackConfig",
    "Centerline",
    "track_centerline",
    "nearest_centerline_index",
    "save_centerline_csv",
    "load_centerline_csv",
]

# 26-neighborhood in lexicographic (di, dj, dk) order; candidate ties are
# broken by taking the first maximum in this order
_OFFSETS = np.array(
    [
        (di, dj, dk)
        for di in (-1, 0, 1)
        for dj in (-1, 0, 1)
        for dk in (-1, 0, 1)
        if not (di == 0 and dj == 0 and dk == 0)
    ],
    dtype=int,
)


@dataclass(frozen=True)
class TrackConfig:
    """num_points is the requested centerline length T; tracking that stalls
    below min_points raises instead of returning an unusable stub."""

    num_points: int = 300
    min_points: int = 51

    def __post_init__(self) -> None:
        if self.num_points < 2:
            raise BadInputError(f"num_points must be >= 2, got {self.num_points}")
        if not 2 <= self.min_points <= self.num_points:
            raise BadInputError(
                f"min_points must lie in [2, num_points], got {self.min_points}"
            )


@dataclass(frozen=True)
class Centerline:
    """Ordered voxel path with per-point depth (mm) and world positions (mm).

    Consecutive points are 26-adjacent and no voxel repeats.  ``stalled``
    marks a centerline cut short (but still usable) because tracking ran out
    of unvisited foreground neighbors.
    """

    points: np.ndarray = field(repr=False)  # (n, 3) int, columns i, j, k
    depths: np.ndarray = field(repr=False)  # (n,) float mm
    world_mm: np.ndarray = field(repr=False)  # (n, 3) float mm
    stalled: bool = False

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=int)
        depths = np.asarray(self.depths, dtype=np.float64)
        world = np.asarray(self.world_mm, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise BadInputError("centerline points must be an (n, 3) array")
        if len(points) != len(depths) or len(points) != len(world):
            raise BadInputError("points, depths and world_mm lengths differ")
        if len(points) < 1:
            raise BadInputError("centerline must contain at least one point")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "depths", depths)
        object.__setattr__(self, "world_mm", world)

    def __len__(self) -> int:
        return len(self.points)


def track_centerline(depth: Volume, seed, cfg: TrackConfig | None = None) -> Centerline:
    """Grow the centerline from the seed over a depth (EDT) volume.

    Each next point is the unvisited 26-neighbor of the current point with
    maximal depth; background voxels (depth 0) are never entered.  Returns
    ``cfg.num_points`` points, or fewer with ``stalled=True`` when no
    candidate remains after at least ``cfg.min_points`` points; stalling
    earlier raises :class:`TrackingStalledError`.
    """
    cfg = cfg or TrackConfig()
    seed = VoxelIndex(int(seed[0]), int(seed[1]), int(seed[2]))
    if not depth.contains(seed):
        raise BadInputError(f"seed {seed} outside volume dims {depth.dims}")
    if depth.value_at(seed) <= 0.0:
        raise SeedOutsideForegroundError(f"seed {seed} lies on background (depth 0)")

    data = depth.data
    nx, ny, nz = depth.dims
    visited = np.zeros(data.shape, dtype=bool)
    points = np.empty((cfg.num_points, 3), dtype=int)
    current = np.asarray(seed, dtype=int)
    points[0] = current
    visited[current[2], current[1], current[0]] = True
    n = 1
    while n < cfg.num_points:
        cand = current + _OFFSETS
        ok = (
            np.all(cand >= 0, axis=1)
            & (cand[:, 0] < nx)
            & (cand[:, 1] < ny)
            & (cand[:, 2] < nz)
        )
        cand = cand[ok]
        depths_c = data[cand[:, 2], cand[:, 1], cand[:, 0]]
        free = ~visited[cand[:, 2], cand[:, 1], cand[:, 0]] & (depths_c > 0.0)
        if not free.any():
            if n < cfg.min_points:
                raise TrackingStalledError(
                    f"tracking stalled after {n} points (minimum {cfg.min_points})"
                )
            points = points[:n]
            break
        cand = cand[free]
        depths_c = depths_c[free]
        current = cand[int(np.argmax(depths_c))]
        points[n] = current
        visited[current[2], current[1], current[0]] = True
        n += 1
    else:
        points = points[:n]

    depths = data[points[:, 2], points[:, 1], points[:, 0]].astype(np.float64)
    world = voxel_to_world(depth, points)
    return Centerline(
        points=points, depths=depths, world_mm=world, stalled=n < cfg.num_points
    )


def nearest_centerline_index(centerline: Centerline, target_mm) -> int:
    """Index of the centerline point closest (world space) to ``target_mm``;
    ties resolve to the smallest index."""
    target = np.asarray(target_mm, dtype=np.float64)
    d2 = np.einsum("ij,ij->i", centerline.world_mm - target, centerline.world_mm - target)
    return int(np.argmin(d2))


def save_centerline_csv(centerline: Centerline, path: str) -> None:
    """Write rows of index,i,j,k,x_mm,y_mm,z_mm,depth_mm."""
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "i", "j", "k", "x_mm", "y_mm", "z_mm", "depth_mm"])
            for idx in range(len(centerline)):
                i, j, k = centerline.points[idx]
                x, y, z = centerline.world_mm[idx]
                writer.writerow(
                    [idx, i, j, k, repr(float(x)), repr(float(y)), repr(float(z)),
                     repr(float(centerline.depths[idx]))]
                )
    except OSError as exc:
        raise BadInputError(f"cannot write centerline to {path!r}: {exc}") from exc


def load_centerline_csv(path: str) -> Centerline:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or header[:8] != [
                "index", "i", "j", "k", "x_mm", "y_mm", "z_mm", "depth_mm",
            ]:
                raise BadInputError(f"{path!r} is not a centerline CSV")
            points, world, depths = [], [], []
            for row in reader:
                points.append([int(row[1]), int(row[2]), int(row[3])])
                world.append([float(row[4]), float(row[5]), float(row[6])])
                depths.append(float(row[7]))
    except OSError as exc:
        raise BadInputError(f"cannot read centerline from {path!r}: {exc}") from exc
    except (ValueError, IndexError) as exc:
        raise BadInputError(f"malformed centerline CSV {path!r}: {exc}") from exc
    if not points:
        raise BadInputError(f"centerline CSV {path!r} holds no points")
    return Centerline(
        points=np.asarray(points), depths=np.asarray(depths), world_mm=np.asarray(world)
    )
