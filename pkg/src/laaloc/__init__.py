"""laaloc: centerline-based orifice localization on tubular anatomy.

Pipeline, desk-scale: volume -> geodesic segmentation -> Euclidean depth
map -> centerline tracking -> 1D localization (learned agent or rule
baseline) -> orifice plane and metrics, validated on synthetic phantoms
with analytic ground truth.
"""

import os as _os

# the hot paths are many small matrix products; multi-threaded BLAS only adds
# synchronization overhead there (set the variables yourself to override,
# before importing this package or numpy)
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")

from .volume import Volume, VoxelIndex, load_volume, save_volume, crop_voi
from .geodesic import (
    GeodesicConfig,
    SeedRegion,
    grow_seed_region,
    geodesic_distance_map,
    dijkstra_geodesic,
    extract_mask,
)
from .edt import edt, brute_force_edt
from .centerline import (
    Centerline,
    TrackConfig,
    track_centerline,
    nearest_centerline_index,
    save_centerline_csv,
    load_centerline_csv,
)
from .world import (
    Action,
    DepthWorld,
    EnvConfig,
    Transition,
    WorldState,
    observe,
    step,
    run_episode,
)
from .networks import (
    NetConfig,
    NetworkParams,
    init_network_params,
    policy_forward,
    value_forward,
    adam_step,
    save_checkpoint,
    load_checkpoint,
)
from .training import (
    Experience,
    TrainConfig,
    collect_experiences,
    compute_advantage,
    ppo_surrogate,
    train,
    evaluate_policy,
)
from .baseline import rule_localize
from .plane import (
    OrificeResult,
    PlaneConfig,
    initial_plane,
    cross_section_area,
    refine_plane,
    orifice_metrics,
)
from .phantoms import (
    PhantomSpec,
    PhantomTruth,
    ProfileFamilyConfig,
    ProfileWorld,
    gen_phantom_volume,
    gen_profile_family,
)
from .config import PipelineConfig, VoiConfig, load_config, save_config
from .pipeline import extract_pipeline, localize_index, localize_orifice

__version__ = "0.1.0"
