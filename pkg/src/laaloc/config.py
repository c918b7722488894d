"""One JSON config bundle covering every pipeline stage.

Sections: voi, geodesic, track, env, net, train, plane.  Missing sections
and missing keys fall back to the stage defaults, so a config file only
needs to name what it overrides.  A few keys accept the short names used in
write-ups ("lambda" for the geodesic threshold, "T" for the centerline
length, "state_len" is derived from env.k when absent).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import BadInputError
from .geodesic import GeodesicConfig
from .centerline import TrackConfig
from .networks import NetConfig
from .plane import PlaneConfig
from .training import TrainConfig
from .world import EnvConfig

__all__ = ["VoiConfig", "PipelineConfig", "load_config", "save_config"]


@dataclass(frozen=True)
class VoiConfig:
    side_mm: float = 70.0

    def __post_init__(self) -> None:
        if self.side_mm <= 0:
            raise BadInputError(f"VOI side_mm must be positive, got {self.side_mm}")


_ALIASES = {
    "geodesic": {"lambda": "lam"},
    "track": {"T": "num_points"},
}


def _build(section: str, cls, payload: dict):
    payload = dict(payload or {})
    for alias, target in _ALIASES.get(section, {}).items():
        if alias in payload:
            payload[target] = payload.pop(alias)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(payload) - names
    if unknown:
        raise BadInputError(f"unknown keys {sorted(unknown)} in config section {section!r}")
    for key, value in payload.items():
        if isinstance(value, list):
            payload[key] = tuple(value)
    try:
        return cls(**payload)
    except TypeError as exc:
        raise BadInputError(f"invalid config section {section!r}: {exc}") from exc


@dataclass(frozen=True)
class PipelineConfig:
    voi: VoiConfig = field(default_factory=VoiConfig)
    geodesic: GeodesicConfig = field(default_factory=GeodesicConfig)
    track: TrackConfig = field(default_factory=TrackConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    net: NetConfig | None = None  # derived from env.k when absent
    train: TrainConfig = field(default_factory=TrainConfig)
    plane: PlaneConfig = field(default_factory=PlaneConfig)

    def resolved_net(self) -> NetConfig:
        if self.net is not None:
            return self.net
        return NetConfig(state_len=self.env.state_length)


def load_config(path: str | None) -> PipelineConfig:
    """Read a pipeline config JSON; ``None`` gives all defaults."""
    if path is None:
        return PipelineConfig()
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise BadInputError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise BadInputError(f"config {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise BadInputError(f"config {path!r} must hold a JSON object")
    known = {"voi", "geodesic", "track", "env", "net", "train", "plane"}
    unknown = set(payload) - known
    if unknown:
        raise BadInputError(f"unknown config sections {sorted(unknown)} in {path!r}")
    net = None
    if "net" in payload:
        net_payload = dict(payload["net"])
        if "state_len" not in net_payload and "env" in payload and "k" in payload["env"]:
            net_payload["state_len"] = 2 * int(payload["env"]["k"]) + 1
        net = _build("net", NetConfig, net_payload)
    return PipelineConfig(
        voi=_build("voi", VoiConfig, payload.get("voi", {})),
        geodesic=_build("geodesic", GeodesicConfig, payload.get("geodesic", {})),
        track=_build("track", TrackConfig, payload.get("track", {})),
        env=_build("env", EnvConfig, payload.get("env", {})),
        net=net,
        train=_build("train", TrainConfig, payload.get("train", {})),
        plane=_build("plane", PlaneConfig, payload.get("plane", {})),
    )


def save_config(cfg: PipelineConfig, path: str) -> None:
    payload = {
        "voi": dataclasses.asdict(cfg.voi),
        "geodesic": dataclasses.asdict(cfg.geodesic),
        "track": dataclasses.asdict(cfg.track),
        "env": dataclasses.asdict(cfg.env),
        "train": dataclasses.asdict(cfg.train),
        "plane": dataclasses.asdict(cfg.plane),
    }
    if cfg.net is not None:
        payload["net"] = dataclasses.asdict(cfg.net)
    try:
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
    except OSError as exc:
        raise BadInputError(f"cannot write config to {path!r}: {exc}") from exc
