"""Pipeline configuration: dataclass sections serialized as flat
``key = value`` text grouped by module section.

Every threshold the pipeline uses is a named key with its default here, so
a run can be reproduced from the echoed effective configuration alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .backend import OptimizeParams, PcmParams
from .loopclose import LoopParams
from .prematch import PrematchParams
from .registration import IcpParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FrontendConfig:
    odometry_source: str = "registration"   # "registration" | "dataset"
    registration_range: float = 15.0        # range cap for odometry clouds, m
    source_voxel: float = 0.2               # moving-cloud voxel, m
    salient_keep: float = 1.0               # optional salient decimation (1 = off)
    submap_radius: float = 15.0
    submap_voxel: float = 0.1
    keynode_translation: float = 1.0        # m
    keynode_rotation_deg: float = 30.0
    icp_max_distance: float = 0.5
    icp_max_iterations: int = 50
    icp_epsilon: float = 1e-6
    icp_min_correspondences: int = 50
    icp_cost: str = "plane"

    def icp_params(self) -> IcpParams:
        return IcpParams(self.icp_max_distance, self.icp_max_iterations,
                         self.icp_epsilon, self.icp_min_correspondences,
                         cost=self.icp_cost)


@dataclass(frozen=True)
class DegeneracyConfig:
    kappa_th: float = 2.0
    hessian_mode: str = "gradient"          # "gradient" | "gauss_newton"
    assess_range: float = 6.0               # range cap for assessment clouds, m
    assess_voxel: float = 0.2
    icp_max_distance: float = 0.5

    def icp_params(self) -> IcpParams:
        return IcpParams(max_correspondence_distance=self.icp_max_distance,
                         cost="plane", min_correspondences=50)


@dataclass(frozen=True)
class OccupancyConfig:
    robot_height: float = 0.8
    ground_tolerance: float = 0.15


@dataclass(frozen=True)
class BackendConfig:
    odom_sigma_trans: float = 0.1           # m; information = 1/sigma^2
    odom_sigma_rot: float = 0.05            # rad
    loop_sigma_trans: float = 0.1
    loop_sigma_rot: float = 0.05
    max_iterations: int = 100
    cost_epsilon: float = 1e-9

    def odom_information(self) -> np.ndarray:
        return np.diag([1.0 / self.odom_sigma_trans ** 2] * 3
                       + [1.0 / self.odom_sigma_rot ** 2] * 3)

    def loop_information(self) -> np.ndarray:
        return np.diag([1.0 / self.loop_sigma_trans ** 2] * 3
                       + [1.0 / self.loop_sigma_rot ** 2] * 3)

    def optimize_params(self) -> OptimizeParams:
        return OptimizeParams(max_iterations=self.max_iterations,
                              cost_epsilon=self.cost_epsilon)


@dataclass(frozen=True)
class PipelineConfig:
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    degeneracy: DegeneracyConfig = field(default_factory=DegeneracyConfig)
    occupancy: OccupancyConfig = field(default_factory=OccupancyConfig)
    prematch: PrematchParams = field(default_factory=PrematchParams)
    loop: LoopParams = field(default_factory=LoopParams)
    pcm: PcmParams = field(default_factory=PcmParams)
    backend: BackendConfig = field(default_factory=BackendConfig)

    def with_loop_params(self) -> "PipelineConfig":
        """Nest the prematch section into the loop params (the verification
        ICP keeps its own defaults, calibrated for the plane cost)."""
        return replace(self, loop=replace(self.loop, prematch=self.prematch))


_SECTIONS = ("frontend", "degeneracy", "occupancy", "prematch", "loop", "pcm", "backend")
# loop params that are nested objects are configured via their own sections
_SKIP_FIELDS = {("loop", "prematch"), ("loop", "icp")}


def _parse_value(text: str, kind):
    text = text.strip()
    if kind is bool:
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    if kind is str:
        return text
    if kind is tuple:
        return tuple(float(v) for v in text.split(",") if v.strip())
    raise ValueError(f"unsupported config type {kind}")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def config_to_text(config: PipelineConfig) -> str:
    lines = []
    for section in _SECTIONS:
        obj = getattr(config, section)
        lines.append(f"[{section}]")
        for f in fields(obj):
            if (section, f.name) in _SKIP_FIELDS:
                continue
            lines.append(f"{f.name} = {_format_value(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)


def config_from_text(text: str) -> PipelineConfig:
    """Parse a sectioned config; unknown keys fail fast with line numbers."""
    config = PipelineConfig()
    overrides: dict[str, dict[str, object]] = {s: {} for s in _SECTIONS}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, value = (part.strip() for part in line.split("=", 1))
        obj = getattr(config, section)
        field_map = {f.name: f for f in fields(obj) if (section, f.name) not in _SKIP_FIELDS}
        if key not in field_map:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{section}]")
        kind = type(getattr(obj, key))
        try:
            overrides[section][key] = _parse_value(value, kind)
        except ValueError as err:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {err}") from err
    return apply_overrides(config, {f"{s}.{k}": v for s, d in overrides.items()
                                    for k, v in d.items()})


def apply_overrides(config: PipelineConfig, overrides: dict[str, object]) -> PipelineConfig:
    """Apply ``section.key -> value`` overrides (values may be strings)."""
    staged: dict[str, dict[str, object]] = {}
    for dotted, value in overrides.items():
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r} must be section.key")
        section, key = dotted.split(".", 1)
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section {section!r}")
        obj = getattr(config, section)
        names = {f.name for f in fields(obj)} - {k for s, k in _SKIP_FIELDS if s == section}
        if key not in names:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        if isinstance(value, str):
            value = _parse_value(value, type(getattr(obj, key)))
        staged.setdefault(section, {})[key] = value
    for section, kv in staged.items():
        object_new = replace(getattr(config, section), **kv)
        config = replace(config, **{section: object_new})
    return config
