"""End-to-end glue: volume in, centerline out; centerline in, orifice out.

Extraction: crop a VOI around the user seed, grow the seed ball, run the
geodesic transform, threshold to a mask, take the Euclidean distance
transform, and track the centerline on it.  Localization: either the
learned agent (greedy rollouts with oscillation stopping, majority vote
over a few random starts) or the rule-based baseline, followed by tilt
refinement of the orifice plane on the mask.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .baseline import rule_localize
from .centerline import Centerline, track_centerline
from .config import PipelineConfig
from .edt import edt
from .errors import BadInputError, ConfigMismatchError, SeedOutsideForegroundError
from .geodesic import extract_mask, geodesic_distance_map, grow_seed_region
from .networks import NetworkParams
from .plane import OrificeResult, refine_plane
from .training import batched_greedy_rollouts
from .volume import Volume, VoxelIndex, crop_voi
from .world import DepthWorld

__all__ = ["ExtractionResult", "extract_pipeline", "localize_index", "localize_orifice"]


@dataclass(frozen=True)
class ExtractionResult:
    centerline: Centerline
    mask: Volume  # VOI-sized, origin adjusted to the parent volume
    depth: Volume
    voi_offset: VoxelIndex


def extract_pipeline(volume: Volume, seed, cfg: PipelineConfig | None = None) -> ExtractionResult:
    """Seed to centerline on one volume (all stages inside the VOI)."""
    cfg = cfg or PipelineConfig()
    voi, offset = crop_voi(volume, seed, cfg.voi.side_mm)
    seed_voi = VoxelIndex(seed[0] - offset.i, seed[1] - offset.j, seed[2] - offset.k)
    if voi.value_at(seed_voi) <= float(voi.data.mean()):
        # the target structure is bright over dark background; a seed at or
        # below the VOI mean cannot be in the lumen
        raise SeedOutsideForegroundError(
            f"seed {tuple(seed)} intensity {voi.value_at(seed_voi):.1f} is not above "
            f"the VOI mean {voi.data.mean():.1f}; expected a bright-lumen seed"
        )
    omega = grow_seed_region(seed_voi, cfg.geodesic.seed_radius_vox, voi)
    distance = geodesic_distance_map(voi, omega, cfg.geodesic)
    mask = extract_mask(distance, cfg.geodesic.lam)
    depth = edt(mask)
    centerline = track_centerline(depth, seed_voi, cfg.track)
    return ExtractionResult(centerline=centerline, mask=mask, depth=depth, voi_offset=offset)


def localize_index(
    centerline: Centerline,
    method: str,
    policy: NetworkParams | None = None,
    cfg: PipelineConfig | None = None,
    rng: np.random.Generator | None = None,
    starts: int = 5,
    rule_smooth: bool = True,
) -> int:
    """Orifice index on the centerline by the chosen localizer.

    The learned method runs ``starts`` greedy test episodes from random
    positions and takes the majority final index (smallest on ties), which
    irons out the rare start inside a shallow side pocket.
    """
    if method == "rule":
        return rule_localize(centerline, smooth=rule_smooth)
    if method != "rl":
        raise BadInputError(f"unknown localization method {method!r}")
    if policy is None:
        raise BadInputError("rl localization requires a trained policy")
    cfg = cfg or PipelineConfig()
    if policy.config.state_len != cfg.env.state_length:
        raise ConfigMismatchError(
            f"policy expects state length {policy.config.state_len}, "
            f"environment produces {cfg.env.state_length}"
        )
    if len(centerline) < cfg.env.state_length:
        raise BadInputError(
            f"centerline length {len(centerline)} shorter than state "
            f"length {cfg.env.state_length}"
        )
    rng = rng or np.random.default_rng(0)
    world = DepthWorld(centerline.depths, cfg.env)
    k, t = cfg.env.k, len(world)
    n = max(1, starts)
    start_idx = rng.integers(k, t - k, size=n)
    profiles = np.broadcast_to(world.profile, (n, t))
    finals = batched_greedy_rollouts(profiles, start_idx, policy, cfg.env)
    counts = Counter(finals.tolist())
    top = max(counts.values())
    return int(min(ix for ix, c in counts.items() if c == top))


def localize_orifice(
    centerline: Centerline,
    mask: Volume,
    method: str,
    policy: NetworkParams | None = None,
    cfg: PipelineConfig | None = None,
    rng: np.random.Generator | None = None,
) -> OrificeResult:
    """Localize and refine the orifice plane; the full test-time product."""
    cfg = cfg or PipelineConfig()
    index = localize_index(centerline, method, policy=policy, cfg=cfg, rng=rng)
    result = refine_plane(mask, centerline, index, cfg.plane)
    return OrificeResult(
        index=result.index,
        center_mm=result.center_mm,
        normal=result.normal,
        area_mm2=result.area_mm2,
        perpendicular_area_mm2=result.perpendicular_area_mm2,
        method=method,
    )
