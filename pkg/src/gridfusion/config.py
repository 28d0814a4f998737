"""Configuration dataclasses for every pipeline stage.

All tunables live here so runs are reproducible from a config dump plus a
seed. `apply_overrides` implements the CLI's ``KEY=VALUE`` mechanism with
dotted paths, e.g. ``selection.min_support=5``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field


@dataclass
class DynamicCellConfig:
    """Thresholds deciding whether a grid cell counts as dynamic."""

    occupancy_threshold: float = 0.7
    mahalanobis_threshold: float = 2.0  # ~95% gate for a 2D Gaussian


@dataclass
class GridConfig:
    cell_size: float = 0.15
    occupancy_prior: float = 0.5
    # inverse sensor model evidence per ray
    hit_evidence: float = 0.6
    free_evidence: float = 0.4
    # particle filter
    process_noise_vel: float = 0.5        # m/s per update, isotropic
    persistence: float = 0.95             # survival factor per update
    newborn_per_cell: int = 8
    newborn_weight_fraction: float = 0.3  # of occupied evidence, scaled by unfilled mass
    newborn_vel_max: float = 20.0         # uniform velocity prior, m/s
    max_particles_per_cell: int = 50
    max_particles_total: int = 200_000
    min_particle_weight: float = 1e-6
    odds_factor_min: float = 0.25         # clamp for the per-update odds reweight
    odds_factor_max: float = 4.0
    cov_regularization: float = 1e-4      # (m/s)^2 added to vel_cov before inversion


@dataclass
class TrackerConfig:
    gate_mahalanobis: float = 3.0
    meas_noise_pos: float = 0.3           # m, std of position measurements
    meas_noise_orientation: float = 0.1   # rad, std of box-fit orientation
    # process noise stds per sqrt(second), state (x, y, theta, v, omega)
    process_noise: tuple[float, float, float, float, float] = (0.15, 0.15, 0.01, 0.8, 0.05)
    # birth prior: longitudinal alignment with default car extent
    birth_length: float = 4.5
    birth_width: float = 1.8
    birth_pos_std: float = 1.0
    birth_orientation_std: float = 0.15
    birth_speed_std: float = 4.0
    birth_yaw_rate_std: float = 0.1
    birth_existence: float = 0.5
    hit_gain: float = 0.3
    miss_decay: float = 0.85
    death_threshold: float = 0.15
    extent_blend: float = 0.2             # weight of a measured extent per update
    ctrv_omega_min: float = 1e-6          # below this, fall back to the CV form
    boxfit_min_points: int = 5


@dataclass
class AssociationConfig:
    dynamic: DynamicCellConfig = field(default_factory=DynamicCellConfig)
    vicinity_margin: float = 0.15         # m, one cell
    fallback_scale: float = 1.5
    fallback_scale_width: bool = True     # scale width too, not just length
    occupancy_weighted_velocity: bool = True


@dataclass
class FusionConfig:
    min_speed_for_heading: float = 0.5    # m/s, below this the heading is noise


@dataclass
class SelectionConfig:
    dynamic: DynamicCellConfig = field(default_factory=DynamicCellConfig)
    min_support: int = 3                  # dynamic cells
    patience: int = 3                     # consecutive low-support frames before death


@dataclass
class EvalConfig:
    match_tolerance: float = 0.04         # s, half a frame at 12.5 Hz
    gap_limit: float = 0.1                # s, continuity rule for track duration
    orientation_modulo_pi: bool = False
    assign_radius: float = 6.0            # m, hypothesis-to-truth assignment gate


@dataclass
class PipelineConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    association: AssociationConfig = field(default_factory=AssociationConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    fusion_enabled: bool = True
    tracker_sensors: str = "radar"        # "radar" or "radar+lidar"
    lidar_cluster_gap: float = 1.0        # m, break distance for scan clustering


def _coerce(value: str, current):
    if isinstance(current, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"cannot parse boolean from {value!r}")
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float):
        return float(value)
    if isinstance(current, str):
        return value
    raise ValueError(f"cannot override field of type {type(current).__name__}")


def apply_overrides(cfg: PipelineConfig, overrides: list[str]) -> PipelineConfig:
    """Apply ``a.b.c=value`` overrides, returning a new config."""
    cfg = copy.deepcopy(cfg)
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not KEY=VALUE")
        path, raw = item.split("=", 1)
        parts = path.split(".")
        target = cfg
        for part in parts[:-1]:
            if not hasattr(target, part):
                raise ValueError(f"unknown config section {part!r} in {path!r}")
            target = getattr(target, part)
        leaf = parts[-1]
        if not hasattr(target, leaf):
            raise ValueError(f"unknown config key {leaf!r} in {path!r}")
        setattr(target, leaf, _coerce(raw, getattr(target, leaf)))
    return cfg
