"""Synthetic scenario engine: ground truth, 2D lidar and radar emulation.

Scenarios describe an ego pose (or waypoint trajectory), rectangular
objects on constant-turn-rate arcs and the two sensors. The lidar casts
one ray per angular step against object rectangles; the radar emits at
most one detection per visible object at its nearest surface point.
Everything is deterministic for a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .geometry import (
    Pose2D,
    nearest_point_on_rect,
    rays_segments_t,
    rect_corners,
    wrap_angle,
)
from .grid import GridGeometry, LaserScan


@dataclass
class SensorConfig:
    kind: str                      # "lidar" or "radar"
    fov_deg: float
    max_range: float
    angular_resolution_deg: float = 0.25   # lidar only
    noise_sigma: float = 0.0
    dropout: float = 0.0
    bias: tuple[float, float] = (0.0, 0.0)  # radar mounting offset, world frame

    def __post_init__(self):
        if not 0.0 < self.fov_deg <= 360.0:
            raise ValueError("fov_deg must be in (0, 360]")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")


@dataclass
class ObjectSpec:
    """One ground-truth box on a constant speed / turn rate trajectory."""

    object_id: int
    length: float
    width: float
    x0: float
    y0: float
    heading0: float
    speed: float
    yaw_rate: float = 0.0
    t_start: float = 0.0
    t_end: float | None = None

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ValueError("object extent must be positive")

    def exists_at(self, t: float) -> bool:
        if t < self.t_start:
            return False
        return self.t_end is None or t <= self.t_end

    def pose_at(self, t: float) -> tuple[np.ndarray, float]:
        """Center and heading at time t (closed-form arc)."""
        tau = t - self.t_start
        th0 = self.heading0
        if abs(self.yaw_rate) < 1e-9:
            c = np.array([self.x0 + self.speed * tau * math.cos(th0),
                          self.y0 + self.speed * tau * math.sin(th0)])
            return c, wrap_angle(th0)
        th1 = th0 + self.yaw_rate * tau
        r = self.speed / self.yaw_rate
        c = np.array([self.x0 + r * (math.sin(th1) - math.sin(th0)),
                      self.y0 + r * (-math.cos(th1) + math.cos(th0))])
        return c, wrap_angle(th1)

    def corners_at(self, t: float) -> np.ndarray:
        center, heading = self.pose_at(t)
        return rect_corners(center, heading, self.length, self.width)


@dataclass
class SceneState:
    """World snapshot handed to the sensor models."""

    t: float
    ego: Pose2D
    objects: list[tuple[int, np.ndarray, float, float, float]]  # id, center, heading, L, W

    def object_corners(self) -> list[np.ndarray]:
        return [rect_corners(c, h, l, w) for _, c, h, l, w in self.objects]


@dataclass
class Scenario:
    name: str
    duration: float
    objects: list[ObjectSpec]
    grid_geometry: GridGeometry
    lidar: SensorConfig
    radar: SensorConfig
    frame_rate: float = 12.5
    seed: int = 0
    ego_waypoints: list[tuple[float, Pose2D]] = field(
        default_factory=lambda: [(0.0, Pose2D(0.0, 0.0, 0.0))])
    tracker_dropout: float = 0.0

    @property
    def dt(self) -> float:
        return 1.0 / self.frame_rate

    @property
    def n_frames(self) -> int:
        return int(round(self.duration * self.frame_rate)) + 1

    def frame_times(self) -> np.ndarray:
        return np.arange(self.n_frames) * self.dt

    def ego_at(self, t: float) -> Pose2D:
        wps = self.ego_waypoints
        if len(wps) == 1 or t <= wps[0][0]:
            return wps[0][1]
        if t >= wps[-1][0]:
            return wps[-1][1]
        for (t0, p0), (t1, p1) in zip(wps, wps[1:]):
            if t0 <= t <= t1:
                a = (t - t0) / (t1 - t0)
                heading = wrap_angle(p0.heading + a * wrap_angle(p1.heading - p0.heading))
                return Pose2D(p0.x + a * (p1.x - p0.x), p0.y + a * (p1.y - p0.y), heading)
        return wps[-1][1]

    def scene_at(self, t: float) -> SceneState:
        objs = []
        for spec in self.objects:
            if not spec.exists_at(t):
                continue
            center, heading = spec.pose_at(t)
            objs.append((spec.object_id, center, heading, spec.length, spec.width))
        return SceneState(t=t, ego=self.ego_at(t), objects=objs)

    def truth_pose(self, object_id: int, t: float):
        for spec in self.objects:
            if spec.object_id == object_id and spec.exists_at(t):
                return spec.pose_at(t)
        return None


# ---------------------------------------------------------------------------
# sensors


def lidar_bearings(cfg: SensorConfig, ego_heading: float) -> np.ndarray:
    fov = math.radians(cfg.fov_deg)
    n = int(round(cfg.fov_deg / cfg.angular_resolution_deg)) + 1
    return ego_heading + np.linspace(-fov / 2.0, fov / 2.0, n)


def simulate_lidar(scene: SceneState, cfg: SensorConfig, seed: int) -> LaserScan:
    """Cast one ray per angular step against all object rectangles.

    Hits get Gaussian range noise; dropped returns are encoded as NaN and
    rays without an intersection report max range with hit_mask False.
    """
    if cfg.kind != "lidar":
        raise ValueError("simulate_lidar needs a lidar config")
    rng = np.random.default_rng(seed)
    bearings = lidar_bearings(cfg, scene.ego.heading)
    dirs = np.column_stack([np.cos(bearings), np.sin(bearings)])
    origin = scene.ego.position

    t_best = np.full(len(bearings), np.inf)
    corners = scene.object_corners()
    if corners:
        seg_a = np.concatenate(corners)
        seg_b = np.concatenate([np.roll(c, -1, axis=0) for c in corners])
        t_best = rays_segments_t(origin, dirs, seg_a, seg_b).min(axis=1)

    hit = np.isfinite(t_best) & (t_best <= cfg.max_range)
    noise = cfg.noise_sigma * rng.normal(0.0, 1.0, size=len(bearings))
    ranges = np.where(hit, np.maximum(t_best + noise, 1e-3), cfg.max_range)
    if cfg.dropout > 0:
        dropped = rng.random(len(bearings)) < cfg.dropout
        ranges = np.where(dropped, np.nan, ranges)
        hit = hit & ~dropped
    return LaserScan(bearings=bearings, ranges=ranges, hit_mask=hit,
                     max_range=cfg.max_range, timestamp=scene.t)


def _occluded(origin: np.ndarray, target_corners: np.ndarray,
              other_corners: list[np.ndarray]) -> bool:
    """True when every probe ray toward the target is blocked by other geometry."""
    if not other_corners:
        return False
    probes = np.vstack([target_corners, nearest_point_on_rect(origin, target_corners)])
    seg_a = np.concatenate(other_corners)
    seg_b = np.concatenate([np.roll(c, -1, axis=0) for c in other_corners])
    for p in probes:
        delta = p - origin
        dist = float(np.hypot(*delta))
        if dist < 1e-9:
            return False
        t = rays_segments_t(origin, (delta / dist)[None, :], seg_a, seg_b).min()
        if t >= dist - 1e-9:
            return False  # this probe reaches the target unobstructed
    return True


def simulate_radar(scene: SceneState, cfg: SensorConfig, seed: int) -> list:
    """At most one position detection per visible object.

    Objects outside the field of view or range, or fully occluded by other
    objects, yield nothing. The detection sits at the nearest surface
    point plus noise (and an optional constant mounting bias).
    """
    from .tracker import Detection

    if cfg.kind != "radar":
        raise ValueError("simulate_radar needs a radar config")
    rng = np.random.default_rng(seed)
    origin = scene.ego.position
    half_fov = math.radians(cfg.fov_deg) / 2.0
    detections = []
    corners_by_obj = {oid: rect_corners(c, h, l, w)
                      for oid, c, h, l, w in scene.objects}
    for oid, center, heading, length, width in scene.objects:
        rel = center - origin
        dist = float(np.hypot(*rel))
        bearing = wrap_angle(math.atan2(rel[1], rel[0]) - scene.ego.heading)
        noise = rng.normal(0.0, 1.0, size=2)  # drawn per object to keep order stable
        drop = rng.random()
        if abs(bearing) > half_fov or dist > cfg.max_range or dist < 1e-9:
            continue
        others = [cc for o, cc in corners_by_obj.items() if o != oid]
        if _occluded(origin, corners_by_obj[oid], others):
            continue
        if drop < cfg.dropout:
            continue
        point = nearest_point_on_rect(origin, corners_by_obj[oid])
        pos = point + np.asarray(cfg.bias) + cfg.noise_sigma * noise
        detections.append(Detection(position=pos, source="radar", timestamp=scene.t))
    return detections


# ---------------------------------------------------------------------------
# scenario files


class ScenarioError(ValueError):
    """Scenario file failed to parse or validate."""


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ScenarioError(f"{where}: missing field {key!r}")
    return mapping[key]


def _sensor_from_dict(d: dict, kind: str, where: str) -> SensorConfig:
    try:
        return SensorConfig(
            kind=kind,
            fov_deg=float(_require(d, "fov_deg", where)),
            max_range=float(_require(d, "max_range", where)),
            angular_resolution_deg=float(d.get("angular_resolution_deg", 0.25)),
            noise_sigma=float(d.get("noise_sigma", 0.0)),
            dropout=float(d.get("dropout", 0.0)),
            bias=tuple(d.get("bias", (0.0, 0.0))),
        )
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: {exc}") from exc


def scenario_from_dict(data: dict, name_hint: str = "scenario") -> Scenario:
    name = data.get("name", name_hint)
    where = f"scenario {name!r}"
    grid = _require(data, "grid", where)
    cell = float(grid.get("cell_size", 0.15))
    x_min, x_max = float(_require(grid, "x_min", where + ".grid")), float(_require(grid, "x_max", where + ".grid"))
    y_min, y_max = float(_require(grid, "y_min", where + ".grid")), float(_require(grid, "y_max", where + ".grid"))
    geometry = GridGeometry(
        width_cells=int(round((x_max - x_min) / cell)),
        height_cells=int(round((y_max - y_min) / cell)),
        cell_size=cell,
        origin=(x_min, y_min),
    )
    objects = []
    for i, obj in enumerate(_require(data, "objects", where)):
        ow = f"{where}.objects[{i}]"
        start = _require(obj, "start", ow)
        if len(start) != 3:
            raise ScenarioError(f"{ow}: start must be [x, y, heading]")
        objects.append(ObjectSpec(
            object_id=int(obj.get("id", i + 1)),
            length=float(_require(obj, "length", ow)),
            width=float(_require(obj, "width", ow)),
            x0=float(start[0]), y0=float(start[1]), heading0=float(start[2]),
            speed=float(_require(obj, "speed", ow)),
            yaw_rate=float(obj.get("yaw_rate", 0.0)),
            t_start=float(obj.get("t_start", 0.0)),
            t_end=(float(obj["t_end"]) if obj.get("t_end") is not None else None),
        ))
    sensors = _require(data, "sensors", where)
    ego_data = data.get("ego", {"x": 0.0, "y": 0.0, "heading": 0.0})
    if "waypoints" in ego_data:
        waypoints = [
            (float(w["t"]), Pose2D(float(w["x"]), float(w["y"]), float(w.get("heading", 0.0))))
            for w in ego_data["waypoints"]
        ]
    else:
        waypoints = [(0.0, Pose2D(float(ego_data.get("x", 0.0)),
                                  float(ego_data.get("y", 0.0)),
                                  float(ego_data.get("heading", 0.0))))]
    return Scenario(
        name=name,
        duration=float(_require(data, "duration", where)),
        frame_rate=float(data.get("frame_rate", 12.5)),
        seed=int(data.get("seed", 0)),
        objects=objects,
        grid_geometry=geometry,
        lidar=_sensor_from_dict(_require(sensors, "lidar", where + ".sensors"), "lidar",
                                where + ".sensors.lidar"),
        radar=_sensor_from_dict(_require(sensors, "radar", where + ".sensors"), "radar",
                                where + ".sensors.radar"),
        ego_waypoints=waypoints,
        tracker_dropout=float(data.get("tracker_dropout", 0.0)),
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: top level must be a mapping")
    return scenario_from_dict(data, name_hint=path.stem)


def builtin_scenario_names() -> list[str]:
    files = resources.files("gridfusion").joinpath("scenarios")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".yaml"))


def load_builtin_scenario(name: str) -> Scenario:
    ref = resources.files("gridfusion").joinpath(f"scenarios/{name}.yaml")
    if not ref.is_file():
        raise ScenarioError(
            f"unknown builtin scenario {name!r}; have {builtin_scenario_names()}")
    data = yaml.safe_load(ref.read_text())
    return scenario_from_dict(data, name_hint=name)


def resolve_scenario(name_or_path: str) -> Scenario:
    """Load a scenario from a file path or from the builtin library."""
    p = Path(name_or_path)
    if p.exists():
        return load_scenario(p)
    return load_builtin_scenario(name_or_path)


__all__ = [
    "SensorConfig", "ObjectSpec", "SceneState", "Scenario", "ScenarioError",
    "lidar_bearings", "simulate_lidar", "simulate_radar",
    "scenario_from_dict", "load_scenario", "load_builtin_scenario",
    "builtin_scenario_names", "resolve_scenario",
]
