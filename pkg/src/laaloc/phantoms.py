"""Synthetic ground-truthed data: appendage-like volumes and depth profiles.

The volumetric phantom is a bright lumen over dark background: a bulbous
tip sphere, a tapering neck (optionally bent in-plane and pinched by
distractor dips), a short constant-radius throat that forms the narrowest
ring, and a large chamber sphere opening directly off the throat.  Truth
(orifice center, normal, analytic area, tip seed, approximate centerline
index) follows from the generating geometry.

The 1D profile family mimics the depth-along-centerline signal of those
volumes -- tip plateau, dip to a minimum at the target, monotone rise into a
high plateau -- at a fraction of the cost, which makes it the training
corpus for the localization agent.  Distractor profiles add an early deep
dip followed by a tall ridge so that the largest-rise rule provably picks
the wrong minimum while the labeled target stays at the true dip.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .baseline import rule_localize
from .errors import BadInputError
from .volume import Volume, VoxelIndex

__all__ = [
    "PhantomSpec",
    "PhantomTruth",
    "ProfileFamilyConfig",
    "ProfileWorld",
    "gen_phantom_volume",
    "gen_profile_family",
    "save_truth_json",
    "load_truth_json",
    "save_profile_family",
    "load_profile_family",
]

_THROAT_MM = 1.5  # short constant-radius waist forming the orifice ring
_AXIS_STEP_MM = 0.25


@dataclass(frozen=True)
class PhantomSpec:
    """Generating geometry (mm) for one volumetric phantom."""

    tip_radius: float = 5.5
    neck_radius: float = 4.0
    atrium_radius: float = 11.0
    neck_length: float = 14.0
    bend_angle: float = 0.0  # degrees, total in-plane bend over the neck
    noise_sigma: float = 0.0  # intensity units added everywhere
    distractor_dips: tuple = ()  # (position_fraction, depth_fraction) pairs
    rng_seed: int = 0
    shape: tuple[int, int, int] = (96, 96, 96)  # (nx, ny, nz)
    spacing: tuple[float, float, float] = (0.5, 0.5, 0.5)
    lumen_intensity: float = 100.0

    def __post_init__(self) -> None:
        if not self.neck_radius < self.atrium_radius:
            raise BadInputError("neck_radius must be smaller than atrium_radius")
        min_vox = 2.0 * max(self.spacing)
        for name in ("tip_radius", "neck_radius", "atrium_radius"):
            if getattr(self, name) <= min_vox:
                raise BadInputError(f"{name} must exceed 2 voxels ({min_vox} mm)")
        if self.neck_length <= 0:
            raise BadInputError("neck_length must be positive")
        if self.noise_sigma < 0:
            raise BadInputError("noise_sigma must be non-negative")
        for pos, depth in self.distractor_dips:
            if not 0.1 <= pos <= 0.9 or not 0.0 <= depth < 1.0:
                raise BadInputError(
                    f"distractor dip ({pos}, {depth}) outside (0.1..0.9, 0..1)"
                )


@dataclass(frozen=True)
class PhantomTruth:
    """Analytic orifice annotation produced by the generator."""

    orifice_center_mm: np.ndarray
    orifice_normal: np.ndarray
    orifice_area_mm2: float
    orifice_index_hint: int
    tip_seed: VoxelIndex


def _smoothstep(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _axis_samples(spec: PhantomSpec):
    """Neck+throat axis polyline from the tip center, plus per-sample radii.

    Returns (points (n,3), radii (n,), tangents (n,3)); the curve starts at
    the origin heading +z and bends in the x-z plane by ``bend_angle`` total
    over the neck, then runs straight through the throat.
    """
    total = spec.neck_length + _THROAT_MM
    n = max(int(np.ceil(total / _AXIS_STEP_MM)) + 1, 2)
    t = np.linspace(0.0, total, n)
    bend = np.deg2rad(spec.bend_angle)
    theta = bend * np.clip(t / spec.neck_length, 0.0, 1.0)
    tangents = np.stack([np.sin(theta), np.zeros_like(theta), np.cos(theta)], axis=1)
    deltas = np.diff(t)
    mids = 0.5 * (tangents[1:] + tangents[:-1])
    mids /= np.linalg.norm(mids, axis=1, keepdims=True)
    points = np.zeros((n, 3))
    points[1:] = np.cumsum(mids * deltas[:, None], axis=0)

    r_start = 0.85 * spec.tip_radius
    taper = r_start + (spec.neck_radius - r_start) * _smoothstep(t / spec.neck_length)
    radii = np.where(t >= spec.neck_length, spec.neck_radius, taper)
    for pos, depth in spec.distractor_dips:
        center = pos * spec.neck_length
        width = 0.12 * spec.neck_length
        bump = np.cos(np.clip((t - center) / width, -1.0, 1.0) * np.pi / 2.0) ** 2
        bump[np.abs(t - center) > width] = 0.0
        radii = radii * (1.0 - depth * bump)
    interior = t < spec.neck_length - 1e-9
    if np.any(radii[interior] <= spec.neck_radius):
        raise BadInputError(
            "distractor dips pinch the neck below the orifice radius; "
            "the orifice ring must stay the narrowest cross-section"
        )
    return points, radii, tangents


def _fill_ball(lumen: np.ndarray, center_vox: np.ndarray, radius_mm: float,
               spacing: np.ndarray) -> None:
    """Mark voxels within radius_mm of a center given in voxel units (x,y,z)."""
    nz, ny, nx = lumen.shape
    r_vox = radius_mm / spacing  # per-axis voxel radius
    lo = np.maximum(np.floor(center_vox - r_vox).astype(int), 0)
    hi = np.minimum(np.ceil(center_vox + r_vox).astype(int) + 1, [nx, ny, nz])
    if np.any(lo >= hi):
        return
    xs = np.arange(lo[0], hi[0])
    ys = np.arange(lo[1], hi[1])
    zs = np.arange(lo[2], hi[2])
    dx = (xs - center_vox[0]) * spacing[0]
    dy = (ys - center_vox[1]) * spacing[1]
    dz = (zs - center_vox[2]) * spacing[2]
    ball = (
        dz[:, None, None] ** 2 + dy[None, :, None] ** 2 + dx[None, None, :] ** 2
        <= radius_mm * radius_mm
    )
    lumen[lo[2] : hi[2], lo[1] : hi[1], lo[0] : hi[0]] |= ball


def gen_phantom_volume(spec: PhantomSpec) -> tuple[Volume, PhantomTruth]:
    """Voxelize one phantom and return it with its analytic truth."""
    points, radii, tangents = _axis_samples(spec)
    tangent_end = tangents[-1]
    throat_end = points[-1]
    atrium_center = throat_end + tangent_end * np.sqrt(
        spec.atrium_radius**2 - spec.neck_radius**2
    )
    orifice_center = points[-1] - tangent_end * (_THROAT_MM / 2.0)

    # bounding box of everything (centers +- radii), then recenter into volume
    all_pts = np.vstack([points, points[:1], atrium_center[None, :]])
    all_rad = np.concatenate([radii, [spec.tip_radius], [spec.atrium_radius]])
    lo = (all_pts - all_rad[:, None]).min(axis=0)
    hi = (all_pts + all_rad[:, None]).max(axis=0)
    extent = np.asarray(spec.shape) * np.asarray(spec.spacing)
    margin = 1.0
    if np.any(hi - lo + 2 * margin > extent):
        raise BadInputError(
            f"phantom geometry spans {np.round(hi - lo, 1).tolist()} mm and does not "
            f"fit the {extent.tolist()} mm volume"
        )
    shift = (extent - (hi - lo)) / 2.0 - lo

    spacing = np.asarray(spec.spacing, dtype=np.float64)
    nz, ny, nx = spec.shape[2], spec.shape[1], spec.shape[0]
    lumen = np.zeros((nz, ny, nx), dtype=bool)
    tip_center = (points[0] + shift) / spacing
    _fill_ball(lumen, tip_center, spec.tip_radius, spacing)
    for pt, r in zip(points, radii):
        _fill_ball(lumen, (pt + shift) / spacing, r, spacing)
    _fill_ball(lumen, (atrium_center + shift) / spacing, spec.atrium_radius, spacing)

    data = np.where(lumen, spec.lumen_intensity, 0.0).astype(np.float32)
    if spec.noise_sigma > 0:
        # band-limited noise, like a reconstruction kernel would produce;
        # voxel-white noise would swamp the intensity-step costs downstream
        rng = np.random.default_rng(spec.rng_seed)
        noise = gaussian_filter(rng.standard_normal(data.shape), sigma=2.0)
        noise *= spec.noise_sigma / noise.std()
        data = data + noise.astype(np.float32)
    volume = Volume(data=data, spacing=tuple(spacing), origin=(0.0, 0.0, 0.0))

    # Chebyshev step count along the axis approximates the tracked index
    axis_vox = (points + shift) / spacing
    cheb = np.abs(np.diff(axis_vox, axis=0)).max(axis=1)
    seg_end = int(np.linalg.norm(points - orifice_center, axis=1).argmin())
    hint = int(round(cheb[:seg_end].sum()))

    tip_seed = VoxelIndex(*(int(round(c)) for c in tip_center))
    truth = PhantomTruth(
        orifice_center_mm=orifice_center + shift,
        orifice_normal=tangent_end.copy(),
        orifice_area_mm2=float(np.pi * spec.neck_radius**2),
        orifice_index_hint=hint,
        tip_seed=tip_seed,
    )
    return volume, truth


def save_truth_json(truth: PhantomTruth, path: str) -> None:
    payload = {
        "orifice_center_mm": [float(x) for x in truth.orifice_center_mm],
        "orifice_normal": [float(x) for x in truth.orifice_normal],
        "orifice_area_mm2": truth.orifice_area_mm2,
        "orifice_index_hint": truth.orifice_index_hint,
        "tip_seed": list(truth.tip_seed),
    }
    try:
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
    except OSError as exc:
        raise BadInputError(f"cannot write truth to {path!r}: {exc}") from exc


def load_truth_json(path: str) -> PhantomTruth:
    try:
        with open(path) as fh:
            payload = json.load(fh)
        return PhantomTruth(
            orifice_center_mm=np.asarray(payload["orifice_center_mm"], dtype=float),
            orifice_normal=np.asarray(payload["orifice_normal"], dtype=float),
            orifice_area_mm2=float(payload["orifice_area_mm2"]),
            orifice_index_hint=int(payload["orifice_index_hint"]),
            tip_seed=VoxelIndex(*payload["tip_seed"]),
        )
    except OSError as exc:
        raise BadInputError(f"cannot read truth from {path!r}: {exc}") from exc
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise BadInputError(f"invalid truth file {path!r}: {exc}") from exc


# ---------------------------------------------------------------------------
# 1D profile families


@dataclass(frozen=True)
class ProfileFamilyConfig:
    """Sampling ranges for the synthetic depth-profile family (depths in mm)."""

    length: int = 300
    target_range: tuple[int, int] = (70, 225)
    tip_depth: tuple[float, float] = (4.5, 7.0)
    dip_depth: tuple[float, float] = (3.0, 5.0)
    atrium_depth: tuple[float, float] = (8.5, 13.0)
    rise_length: tuple[int, int] = (20, 44)
    distractor_prob: float = 0.0
    noise_sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.length < 101:
            raise BadInputError("profile length must be >= 101")
        lo, hi = self.target_range
        if not 50 <= lo < hi <= self.length - 60:
            raise BadInputError(
                f"target_range {self.target_range} must sit well inside the profile"
            )
        if not 0.0 <= self.distractor_prob <= 1.0:
            raise BadInputError("distractor_prob must lie in [0,1]")
        if self.noise_sigma < 0:
            raise BadInputError("noise_sigma must be non-negative")


@dataclass(frozen=True)
class ProfileWorld:
    depths: np.ndarray = field(repr=False)
    target: int = 0
    distractor: bool = False


def _ease(i0: int, i1: int, y0: float, y1: float, out: np.ndarray) -> None:
    """Cosine-smoothed monotone ramp from (i0, y0) to (i1, y1), inclusive."""
    idx = np.arange(i0, i1 + 1)
    s = (idx - i0) / max(i1 - i0, 1)
    out[i0 : i1 + 1] = y0 + (y1 - y0) * (1.0 - np.cos(np.pi * s)) / 2.0


def _ease_in(i0: int, i1: int, y0: float, y1: float, out: np.ndarray) -> None:
    """Monotone ramp that is flat at i0 and steepest at i1.

    Used on the approach side of every dip so the minimum is a sharp V: a
    flat-bottomed dip would leave the target ambiguous within the flat zone
    no matter how well the agent learns.
    """
    idx = np.arange(i0, i1 + 1)
    s = (idx - i0) / max(i1 - i0, 1)
    out[i0 : i1 + 1] = y0 + (y1 - y0) * (1.0 - np.cos(np.pi * s / 2.0))


def _ease_out(i0: int, i1: int, y0: float, y1: float, out: np.ndarray) -> None:
    """Monotone ramp that is steepest at i0 and flat at i1."""
    idx = np.arange(i0, i1 + 1)
    s = (idx - i0) / max(i1 - i0, 1)
    out[i0 : i1 + 1] = y0 + (y1 - y0) * np.sin(np.pi * s / 2.0)


def _u(rng: np.random.Generator, lohi: tuple[float, float]) -> float:
    return float(rng.uniform(lohi[0], lohi[1]))


def _gen_clean(rng: np.random.Generator, cfg: ProfileFamilyConfig):
    """Tip plateau, descent to a sharp dip at the target, monotone rise
    into the chamber plateau.  Both dip walls are steepest at the minimum
    (a flat-bottomed dip would leave the target ambiguous within the flat
    zone no matter how well the agent learns)."""
    profile, p, _b, _d_min = _build_base(rng, cfg, min_rise=cfg.rise_length[0])
    return profile, p


def _build_base(rng: np.random.Generator, cfg: ProfileFamilyConfig, min_rise: int):
    t = cfg.length
    p = int(rng.integers(cfg.target_range[0], cfg.target_range[1] + 1))
    d_tip = _u(rng, cfg.tip_depth)
    d_min = min(_u(rng, cfg.dip_depth), 0.8 * d_tip)
    d_atr = max(_u(rng, cfg.atrium_depth), 1.4 * d_tip)
    rise = int(rng.integers(max(cfg.rise_length[0], min_rise), cfg.rise_length[1] + 1))
    b = min(p + rise, t - 8)
    a = int(rng.integers(int(0.25 * p), int(0.7 * p)))
    profile = np.empty(t)
    _ease(0, a, d_tip * rng.uniform(1.02, 1.12), d_tip, profile)
    _ease_in(a, p, d_tip, d_min, profile)
    _ease_out(p, b, d_min, d_atr, profile)
    profile[b:] = d_atr
    return profile, p, b, d_min


def _gen_distractor(rng: np.random.Generator, cfg: ProfileFamilyConfig):
    """A clean profile whose main rise is interrupted by a false minimum.

    A shallow notch a dozen-odd indices past the target splits the big rise
    into two runs; the second (notch to plateau) carries the larger total
    increase, so the largest-rise rule anchors to the notch instead of the
    true dip.  The notch sits high on the normalized scale, far from any
    true-dip level, so the profiles stay consistent with the clean family
    for the learned agent.
    """
    profile, p, b, d_min = _build_base(rng, cfg, min_rise=34)
    rise = b - p
    # notch: early in the rise (below the half-way depth of the sine ramp)
    # so the remaining climb stays the largest run
    offset = int(rng.integers(10, max(11, int(0.33 * rise))))
    r = p + offset
    half = 3
    # the bottom must undercut the left shoulder to break the run, but stay
    # well above the true dip so normalized levels remain separable
    drop = float(rng.uniform(0.3, 0.8))
    bottom = max(profile[r - half] - drop, d_min + 0.5)
    _ease_in(r - half, r, profile[r - half], bottom, profile)
    _ease_out(r, r + half, bottom, profile[r + half], profile)
    return profile, p


def gen_profile_family(
    n: int, cfg: ProfileFamilyConfig | None = None, rng_seed: int = 0
) -> list[ProfileWorld]:
    """Generate ``n`` profile worlds; deterministic for a fixed seed.

    Noise-free non-distractor profiles are constructed so the rule-based
    localizer recovers the target exactly; distractor profiles are
    constructed (and verified here) so it does not.
    """
    if n < 1:
        raise BadInputError(f"need n >= 1 profiles, got {n}")
    cfg = cfg or ProfileFamilyConfig()
    rng = np.random.default_rng(rng_seed)
    out = []
    for _ in range(n):
        distractor = bool(rng.random() < cfg.distractor_prob)
        profile, p = (_gen_distractor if distractor else _gen_clean)(rng, cfg)
        # construction guarantees are checked on the noise-free profile
        if distractor:
            got = rule_localize(profile)
            if abs(got - p) < 10:
                raise BadInputError(
                    "distractor construction failed: rule landed within 10 of the target"
                )
        else:
            assert rule_localize(profile) == p, "clean profile must satisfy the rule"
        if cfg.noise_sigma > 0:
            profile = np.maximum(
                profile + rng.normal(0.0, cfg.noise_sigma, size=profile.shape), 0.2
            )
        out.append(ProfileWorld(depths=profile, target=p, distractor=distractor))
    return out


def save_profile_family(worlds: list[ProfileWorld], directory: str) -> None:
    """Write profiles.csv (one row per profile) and targets.csv."""
    os.makedirs(directory, exist_ok=True)
    try:
        with open(os.path.join(directory, "profiles.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            for w in worlds:
                writer.writerow([repr(float(x)) for x in w.depths])
        with open(os.path.join(directory, "targets.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["profile", "target", "distractor"])
            for idx, w in enumerate(worlds):
                writer.writerow([idx, w.target, int(w.distractor)])
    except OSError as exc:
        raise BadInputError(f"cannot write profile family to {directory!r}: {exc}") from exc


def load_profile_family(directory: str) -> list[ProfileWorld]:
    profiles_path = os.path.join(directory, "profiles.csv")
    targets_path = os.path.join(directory, "targets.csv")
    for path in (profiles_path, targets_path):
        if not os.path.exists(path):
            raise BadInputError(f"missing profile family file {path!r}")
    try:
        with open(profiles_path, newline="") as fh:
            profiles = [np.asarray([float(x) for x in row]) for row in csv.reader(fh) if row]
        with open(targets_path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)  # header
            targets = [(int(r[1]), bool(int(r[2]))) for r in reader if r]
    except (OSError, ValueError, IndexError) as exc:
        raise BadInputError(f"malformed profile family in {directory!r}: {exc}") from exc
    if len(profiles) != len(targets):
        raise BadInputError(
            f"profile/target count mismatch in {directory!r}: "
            f"{len(profiles)} vs {len(targets)}"
        )
    return [
        ProfileWorld(depths=prof, target=tgt, distractor=dis)
        for prof, (tgt, dis) in zip(profiles, targets)
    ]
