"""From a converged centerline index to an orifice plane and its metrics.

The initial plane sits at the centerline point with the local tangent as
its normal.  The cross-section behind a plane is measured by sampling the
mask on a regular in-plane grid (trilinear, threshold 0.5), flood-filling
the connected region that contains the plane center -- so neighboring
structures touched by the same plane do not inflate the area -- and counting
cells.  Refinement tilts the plane on a +-20 degree grid about the two
in-plane axes and keeps the minimum-area candidate, favoring the smallest
tilt on ties.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .centerline import Centerline
from .errors import BadInputError, CenterInBackgroundError, DegenerateTangentError
from .volume import Volume

__all__ = [
    "PlaneConfig",
    "OrificeResult",
    "OrificeMetrics",
    "initial_plane",
    "cross_section_area",
    "refine_plane",
    "orifice_metrics",
    "save_orifice_json",
    "load_orifice_json",
]


@dataclass(frozen=True)
class PlaneConfig:
    tilt_max_deg: float = 20.0
    tilt_step_deg: float = 5.0
    tangent_window: int = 3
    grid_halfwidth_mm: float = 25.0

    def __post_init__(self) -> None:
        if self.tilt_max_deg < 0 or self.tilt_step_deg <= 0:
            raise BadInputError("tilt bounds must be non-negative, step positive")
        if self.tangent_window < 1:
            raise BadInputError(f"tangent_window must be >= 1, got {self.tangent_window}")
        if self.grid_halfwidth_mm <= 0:
            raise BadInputError("grid_halfwidth_mm must be positive")


@dataclass(frozen=True)
class OrificeResult:
    """Localized orifice: centerline index, plane center/normal, area."""

    index: int
    center_mm: np.ndarray
    normal: np.ndarray
    area_mm2: float
    perpendicular_area_mm2: float | None = None
    method: str = ""

    def __post_init__(self) -> None:
        center = np.asarray(self.center_mm, dtype=np.float64)
        normal = np.asarray(self.normal, dtype=np.float64)
        norm = np.linalg.norm(normal)
        if abs(norm - 1.0) > 1e-9:
            if norm <= 0:
                raise BadInputError("orifice normal must be non-zero")
            normal = normal / norm
        if self.area_mm2 < 0:
            raise BadInputError("orifice area must be non-negative")
        object.__setattr__(self, "center_mm", center)
        object.__setattr__(self, "normal", normal)


@dataclass(frozen=True)
class OrificeMetrics:
    center_mm: float
    orientation_deg: float
    area_mm2: float


def initial_plane(centerline: Centerline, i: int, window: int = 3):
    """Plane through point i, normal along the +-window central difference."""
    n = len(centerline)
    if not 0 <= i < n:
        raise BadInputError(f"index {i} outside centerline of length {n}")
    lo = max(i - window, 0)
    hi = min(i + window, n - 1)
    tangent = centerline.world_mm[hi] - centerline.world_mm[lo]
    norm = np.linalg.norm(tangent)
    if norm < 1e-12:
        raise DegenerateTangentError(f"zero-length tangent at index {i}")
    return centerline.world_mm[i].copy(), tangent / norm


def _plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic orthonormal in-plane axes (u, v) for a unit normal."""
    helper = np.zeros(3)
    helper[int(np.argmin(np.abs(normal)))] = 1.0
    u = np.cross(normal, helper)
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    return u, v


def _rotate_about(vec: np.ndarray, axis: np.ndarray, angle_deg: float) -> np.ndarray:
    a = np.deg2rad(angle_deg)
    c, s = np.cos(a), np.sin(a)
    return vec * c + np.cross(axis, vec) * s + axis * np.dot(axis, vec) * (1.0 - c)


def cross_section_area(
    mask: Volume,
    center_mm,
    normal,
    grid_halfwidth_mm: float = 25.0,
    cell_mm: float | None = None,
) -> float:
    """Area (mm^2) of the in-plane connected foreground containing center."""
    center = np.asarray(center_mm, dtype=np.float64)
    normal = np.asarray(normal, dtype=np.float64)
    normal = normal / np.linalg.norm(normal)
    if cell_mm is None:
        cell_mm = float(min(mask.spacing))
    u, v = _plane_basis(normal)
    half_cells = int(np.ceil(grid_halfwidth_mm / cell_mm))
    coords_1d = np.arange(-half_cells, half_cells + 1) * cell_mm
    a, b = np.meshgrid(coords_1d, coords_1d, indexing="ij")
    pts = center[None, None, :] + a[..., None] * u[None, None, :] + b[..., None] * v[None, None, :]
    spacing = np.asarray(mask.spacing)
    origin = np.asarray(mask.origin)
    vox = (pts - origin) / spacing  # (n, n, 3) in (x, y, z) voxel units
    samples = ndimage.map_coordinates(
        mask.data, [vox[..., 2], vox[..., 1], vox[..., 0]], order=1, mode="constant", cval=0.0
    )
    inside = samples >= 0.5
    ci = half_cells
    if not inside[ci, ci]:
        raise CenterInBackgroundError(
            f"plane center {center.tolist()} is not inside the mask foreground"
        )
    labels, _ = ndimage.label(inside, structure=np.ones((3, 3), dtype=int))
    count = int(np.sum(labels == labels[ci, ci]))
    return count * cell_mm * cell_mm


def refine_plane(
    mask: Volume, centerline: Centerline, i: int, cfg: PlaneConfig | None = None
) -> OrificeResult:
    """Tilt search around the initial plane; keeps the minimum cross-section.

    Ties prefer the smallest total tilt (then the lexicographically first
    angle pair), so a perpendicular optimum reports zero tilt exactly.
    """
    cfg = cfg or PlaneConfig()
    center, normal0 = initial_plane(centerline, i, cfg.tangent_window)
    u, v = _plane_basis(normal0)
    steps = int(round(cfg.tilt_max_deg / cfg.tilt_step_deg))
    angles = [cfg.tilt_step_deg * s for s in range(-steps, steps + 1)]
    best = None
    perpendicular_area = None
    for a in angles:
        for b in angles:
            n_ab = _rotate_about(_rotate_about(normal0, u, a), v, b)
            area = cross_section_area(mask, center, n_ab, cfg.grid_halfwidth_mm)
            if a == 0 and b == 0:
                perpendicular_area = area
            key = (area, abs(a) + abs(b), a, b)
            if best is None or key < best[0]:
                best = (key, n_ab)
    (area, _, _, _), normal = best
    return OrificeResult(
        index=int(i),
        center_mm=center,
        normal=normal,
        area_mm2=float(area),
        perpendicular_area_mm2=float(perpendicular_area),
    )


def orifice_metrics(result: OrificeResult, truth: OrificeResult) -> OrificeMetrics:
    """Center distance (mm), unsigned plane angle (deg), absolute area gap."""
    center = float(np.linalg.norm(result.center_mm - truth.center_mm))
    dot = abs(float(np.dot(result.normal, truth.normal)))
    orientation = float(np.degrees(np.arccos(min(dot, 1.0))))
    area = abs(result.area_mm2 - truth.area_mm2)
    return OrificeMetrics(center_mm=center, orientation_deg=orientation, area_mm2=area)


def save_orifice_json(result: OrificeResult, path: str, extra: dict | None = None) -> None:
    payload = {
        "index": result.index,
        "center_mm": [float(x) for x in result.center_mm],
        "normal": [float(x) for x in result.normal],
        "area_mm2": result.area_mm2,
    }
    if result.perpendicular_area_mm2 is not None:
        payload["perpendicular_area_mm2"] = result.perpendicular_area_mm2
    if result.method:
        payload["method"] = result.method
    if extra:
        payload.update(extra)
    try:
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
    except OSError as exc:
        raise BadInputError(f"cannot write orifice result to {path!r}: {exc}") from exc


def load_orifice_json(path: str) -> tuple[OrificeResult, dict]:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise BadInputError(f"cannot read orifice result from {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise BadInputError(f"corrupt orifice result {path!r}: {exc}") from exc
    try:
        result = OrificeResult(
            index=int(payload["index"]),
            center_mm=np.asarray(payload["center_mm"], dtype=float),
            normal=np.asarray(payload["normal"], dtype=float),
            area_mm2=float(payload["area_mm2"]),
            perpendicular_area_mm2=payload.get("perpendicular_area_mm2"),
            method=payload.get("method", ""),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise BadInputError(f"invalid orifice result {path!r}: {exc}") from exc
    return result, payload
