"""Simplified dynamic occupancy grid.

Each cell carries an occupancy probability plus a 2D velocity estimate
(mean and covariance) maintained by a constant-velocity particle filter.
Laser scans enter through an inverse sensor model that produces per-cell
occupied/free evidence; the filter turns evidence into particle weights.

Occupancy is read out as ``prior + (1 - prior) * min(1, sum of weights)``
per cell, so a cell with no particles sits exactly at the configured prior
and evidence-starved cells decay back toward it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .config import DynamicCellConfig, GridConfig
from .geometry import Pose2D


@dataclass
class LaserScan:
    """One 2D sweep: bearings in the world frame, ranges in meters.

    ``hit_mask`` marks rays that returned an object echo; rays with
    ``hit_mask`` False and a finite range are free up to that range.
    Non-finite ranges mark dropped returns and carry no information.
    """

    bearings: np.ndarray
    ranges: np.ndarray
    hit_mask: np.ndarray
    max_range: float
    timestamp: float = 0.0


@dataclass(frozen=True)
class GridGeometry:
    width_cells: int
    height_cells: int
    cell_size: float
    origin: tuple[float, float]  # world position of the lower-left grid corner

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.width_cells <= 0 or self.height_cells <= 0:
            raise ValueError("grid dimensions must be positive")

    @property
    def x_min(self) -> float:
        return self.origin[0]

    @property
    def y_min(self) -> float:
        return self.origin[1]

    @property
    def x_max(self) -> float:
        return self.origin[0] + self.width_cells * self.cell_size

    @property
    def y_max(self) -> float:
        return self.origin[1] + self.height_cells * self.cell_size

    @property
    def n_cells(self) -> int:
        return self.width_cells * self.height_cells

    def world_to_cell(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(row, col) indices of the cells containing the given points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        cols = np.floor((pts[:, 0] - self.origin[0]) / self.cell_size).astype(np.int64)
        rows = np.floor((pts[:, 1] - self.origin[1]) / self.cell_size).astype(np.int64)
        return rows, cols

    def cell_centers(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        x = self.origin[0] + (np.asarray(cols) + 0.5) * self.cell_size
        y = self.origin[1] + (np.asarray(rows) + 0.5) * self.cell_size
        return np.column_stack([np.atleast_1d(x), np.atleast_1d(y)])

    def all_cell_centers(self) -> np.ndarray:
        """(H, W, 2) array of cell center coordinates."""
        xs = self.origin[0] + (np.arange(self.width_cells) + 0.5) * self.cell_size
        ys = self.origin[1] + (np.arange(self.height_cells) + 0.5) * self.cell_size
        cx, cy = np.meshgrid(xs, ys)
        return np.stack([cx, cy], axis=-1)

    def in_bounds(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        return (rows >= 0) & (rows < self.height_cells) & (cols >= 0) & (cols < self.width_cells)


@dataclass(frozen=True)
class GridCell:
    """Per-cell state view."""

    occupancy: float
    vel_mean: np.ndarray
    vel_cov: np.ndarray
    particle_count: int


@dataclass
class MeasurementGrid:
    """Per-cell occupied/free evidence produced by the inverse sensor model."""

    geometry: GridGeometry
    occupied: np.ndarray
    free: np.ndarray
    skipped_rays: int = 0

    @classmethod
    def empty(cls, geometry: GridGeometry) -> "MeasurementGrid":
        shape = (geometry.height_cells, geometry.width_cells)
        return cls(geometry, np.zeros(shape), np.zeros(shape))


@dataclass
class GridMap:
    """Dense grid state plus the particle population backing it.

    Cell arrays are row-major (row 0 at y_min). The particle arrays are
    internal filter state; readers should only touch the cell arrays.
    """

    geometry: GridGeometry
    config: GridConfig
    occupancy: np.ndarray
    vel_mean: np.ndarray
    vel_cov: np.ndarray
    particle_count: np.ndarray
    timestamp: float = 0.0
    particle_pos: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    particle_vel: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    particle_weight: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def create(cls, geometry: GridGeometry, config: GridConfig | None = None,
               timestamp: float = 0.0) -> "GridMap":
        config = config or GridConfig()
        shape = (geometry.height_cells, geometry.width_cells)
        return cls(
            geometry=geometry,
            config=config,
            occupancy=np.full(shape, config.occupancy_prior),
            vel_mean=np.zeros(shape + (2,)),
            vel_cov=np.zeros(shape + (2, 2)),
            particle_count=np.zeros(shape, dtype=np.int64),
            timestamp=timestamp,
        )

    def cell(self, row: int, col: int) -> GridCell:
        return GridCell(
            occupancy=float(self.occupancy[row, col]),
            vel_mean=self.vel_mean[row, col].copy(),
            vel_cov=self.vel_cov[row, col].copy(),
            particle_count=int(self.particle_count[row, col]),
        )


# ---------------------------------------------------------------------------
# inverse sensor model


def _traverse_cells(origin: np.ndarray, bearings: np.ndarray, t_ends: np.ndarray,
                    geometry: GridGeometry) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact grid traversal of many rays at once (Amanatides-Woo, lockstep).

    Returns (ray_index, row, col) triplets for every cell each ray passes
    through, ordered along the ray, up to and including the cell containing
    the ray endpoint (clipped to the grid).
    """
    n = len(bearings)
    dirs = np.column_stack([np.cos(bearings), np.sin(bearings)])

    # clip ray interval [t0, t1] to the grid box
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(np.abs(dirs) > 1e-300, 1.0 / dirs, np.inf)
    tx1 = (geometry.x_min - origin[0]) * inv[:, 0]
    tx2 = (geometry.x_max - origin[0]) * inv[:, 0]
    ty1 = (geometry.y_min - origin[1]) * inv[:, 1]
    ty2 = (geometry.y_max - origin[1]) * inv[:, 1]
    # axis-parallel rays: valid iff origin coordinate is inside the slab
    x_in = (origin[0] >= geometry.x_min) & (origin[0] <= geometry.x_max)
    y_in = (origin[1] >= geometry.y_min) & (origin[1] <= geometry.y_max)
    tx_lo = np.where(np.isfinite(tx1) | np.isfinite(tx2), np.minimum(tx1, tx2),
                     np.where(x_in, -np.inf, np.inf))
    tx_hi = np.where(np.isfinite(tx1) | np.isfinite(tx2), np.maximum(tx1, tx2),
                     np.where(x_in, np.inf, -np.inf))
    ty_lo = np.where(np.isfinite(ty1) | np.isfinite(ty2), np.minimum(ty1, ty2),
                     np.where(y_in, -np.inf, np.inf))
    ty_hi = np.where(np.isfinite(ty1) | np.isfinite(ty2), np.maximum(ty1, ty2),
                     np.where(y_in, np.inf, -np.inf))
    t0 = np.maximum(np.maximum(tx_lo, ty_lo), 0.0)
    t1 = np.minimum(np.minimum(tx_hi, ty_hi), t_ends)
    eps = 1e-9 * max(1.0, geometry.cell_size)
    active = t0 + eps < t1

    # current cell at the clipped entry point
    entry = origin[None, :] + dirs * (t0[:, None] + eps)
    rows, cols = geometry.world_to_cell(entry)
    rows = np.clip(rows, 0, geometry.height_cells - 1)
    cols = np.clip(cols, 0, geometry.width_cells - 1)

    step = np.sign(dirs).astype(np.int64)
    t_delta = np.where(np.abs(dirs) > 1e-300, geometry.cell_size * np.abs(inv), np.inf)
    # parameter value at the next cell boundary along each axis
    next_x = geometry.x_min + (cols + (step[:, 0] > 0)) * geometry.cell_size
    next_y = geometry.y_min + (rows + (step[:, 1] > 0)) * geometry.cell_size
    t_max_x = np.where(np.abs(dirs[:, 0]) > 1e-300,
                       (next_x - origin[0]) * inv[:, 0], np.inf)
    t_max_y = np.where(np.abs(dirs[:, 1]) > 1e-300,
                       (next_y - origin[1]) * inv[:, 1], np.inf)

    out_rays, out_rows, out_cols = [], [], []
    ray_ids = np.arange(n)
    max_steps = geometry.width_cells + geometry.height_cells + 2
    for _ in range(max_steps):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        out_rays.append(ray_ids[idx])
        out_rows.append(rows[idx].copy())
        out_cols.append(cols[idx].copy())

        cross = np.minimum(t_max_x, t_max_y)
        done = active & (cross >= t1)
        active = active & ~done

        go_x = active & (t_max_x <= t_max_y)
        go_y = active & ~go_x
        cols = np.where(go_x, cols + step[:, 0], cols)
        t_max_x = np.where(go_x, t_max_x + t_delta[:, 0], t_max_x)
        rows = np.where(go_y, rows + step[:, 1], rows)
        t_max_y = np.where(go_y, t_max_y + t_delta[:, 1], t_max_y)
        # leaving the grid ends the ray
        inside = (rows >= 0) & (rows < geometry.height_cells) & \
                 (cols >= 0) & (cols < geometry.width_cells)
        active &= inside

    if not out_rays:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    return (np.concatenate(out_rays), np.concatenate(out_rows), np.concatenate(out_cols))


def inverse_sensor_model(scan: LaserScan, sensor_pose: Pose2D,
                         geometry: GridGeometry,
                         config: GridConfig | None = None) -> MeasurementGrid:
    """Rasterize a laser scan into per-cell occupied/free evidence.

    Cells a ray crosses before its hit collect free evidence, the hit cell
    collects occupied evidence, and cells beyond the hit stay untouched.
    Rays with non-finite range are skipped and counted in ``skipped_rays``.
    """
    config = config or GridConfig()
    meas = MeasurementGrid.empty(geometry)

    bearings = np.asarray(scan.bearings, dtype=float)
    ranges = np.asarray(scan.ranges, dtype=float)
    hits = np.asarray(scan.hit_mask, dtype=bool)
    valid = np.isfinite(ranges)
    meas.skipped_rays = int(np.count_nonzero(~valid))
    if not valid.any():
        return meas

    bearings = bearings[valid]
    ranges = np.minimum(ranges[valid], scan.max_range)
    hits = hits[valid]
    origin = np.array([sensor_pose.x, sensor_pose.y])

    ray_ids, rows, cols = _traverse_cells(origin, bearings, ranges, geometry)
    if len(ray_ids) == 0:
        return meas

    flat = rows * geometry.width_cells + cols

    # the hit cell is the one containing the ray endpoint, when inside the grid
    end_pts = origin[None, :] + np.column_stack([np.cos(bearings), np.sin(bearings)]) * ranges[:, None]
    hit_rows, hit_cols = geometry.world_to_cell(end_pts)
    hit_ok = hits & geometry.in_bounds(hit_rows, hit_cols)
    hit_flat = np.where(hit_ok, hit_rows * geometry.width_cells + hit_cols, -1)

    free_mask = flat != hit_flat[ray_ids]
    free_counts = np.bincount(flat[free_mask], minlength=geometry.n_cells)
    occ_counts = np.bincount(hit_flat[hit_ok], minlength=geometry.n_cells)

    shape = meas.free.shape
    free_ev = 1.0 - (1.0 - config.free_evidence) ** free_counts.reshape(shape)
    occ_ev = 1.0 - (1.0 - config.hit_evidence) ** occ_counts.reshape(shape)
    # occupied evidence wins where both were touched
    free_ev = np.minimum(free_ev, 1.0 - occ_ev)
    meas.free = free_ev
    meas.occupied = occ_ev
    return meas


# ---------------------------------------------------------------------------
# particle filter update


def _systematic_resample(weights: np.ndarray, n_out: int, u0: float) -> np.ndarray:
    """Indices of a systematic resample; u0 is a uniform draw in [0, 1)."""
    cum = np.cumsum(weights)
    cum /= cum[-1]
    picks = (u0 + np.arange(n_out)) / n_out
    return np.searchsorted(cum, picks, side="left")


def grid_update(grid: GridMap, meas: MeasurementGrid, dt: float, rng_seed: int) -> GridMap:
    """One predict/update/resample cycle of the cell velocity filter.

    Returns a new GridMap; the input snapshot is left untouched. The whole
    cycle is deterministic for a fixed ``rng_seed``.
    """
    if meas.geometry != grid.geometry:
        raise ValueError("measurement grid geometry does not match the grid map")
    if dt <= 0:
        raise ValueError("dt must be positive")

    cfg = grid.config
    geo = grid.geometry
    rng = np.random.default_rng(rng_seed)

    # predict: constant velocity plus isotropic velocity noise
    pos = grid.particle_pos + grid.particle_vel * dt
    vel = grid.particle_vel + rng.normal(0.0, cfg.process_noise_vel, size=grid.particle_vel.shape)
    weight = grid.particle_weight * cfg.persistence

    inside = (pos[:, 0] >= geo.x_min) & (pos[:, 0] < geo.x_max) & \
             (pos[:, 1] >= geo.y_min) & (pos[:, 1] < geo.y_max)
    pos, vel, weight = pos[inside], vel[inside], weight[inside]

    rows, cols = geo.world_to_cell(pos)
    flat = rows * geo.width_cells + cols

    # measurement reweight: clamped odds around the unknown midpoint 0.5
    m = 0.5 * (1.0 + meas.occupied.ravel() - meas.free.ravel())
    m = np.clip(m, 1e-6, 1.0 - 1e-6)
    factor = np.clip(m / (1.0 - m), cfg.odds_factor_min, cfg.odds_factor_max)
    weight = weight * factor[flat]

    # newborn particles fill the unexplained occupied evidence
    occ_flat = meas.occupied.ravel()
    persisted = np.bincount(flat, weights=weight, minlength=geo.n_cells)
    birth_cells = np.flatnonzero(occ_flat > 1e-3)
    if len(birth_cells) > 0:
        birth_mass = cfg.newborn_weight_fraction * occ_flat[birth_cells] * \
            np.clip(1.0 - persisted[birth_cells], 0.0, 1.0)
        keep = birth_mass > cfg.min_particle_weight
        birth_cells, birth_mass = birth_cells[keep], birth_mass[keep]
    if len(birth_cells) > 0:
        k = cfg.newborn_per_cell
        b_rows = birth_cells // geo.width_cells
        b_cols = birth_cells % geo.width_cells
        lo = np.column_stack([geo.x_min + b_cols * geo.cell_size,
                              geo.y_min + b_rows * geo.cell_size])
        new_pos = np.repeat(lo, k, axis=0) + rng.uniform(0.0, geo.cell_size, size=(len(birth_cells) * k, 2))
        new_vel = rng.uniform(-cfg.newborn_vel_max, cfg.newborn_vel_max, size=(len(birth_cells) * k, 2))
        new_w = np.repeat(birth_mass / k, k)
        pos = np.concatenate([pos, new_pos])
        vel = np.concatenate([vel, new_vel])
        weight = np.concatenate([weight, new_w])
        flat = np.concatenate([flat, np.repeat(birth_cells, k)])

    # cull negligible weights
    keep = weight > cfg.min_particle_weight
    pos, vel, weight, flat = pos[keep], vel[keep], weight[keep], flat[keep]

    # clamp per-cell mass at 1 so occupancy stays a probability
    sums = np.bincount(flat, weights=weight, minlength=geo.n_cells)
    over = sums > 1.0
    if over.any():
        scale = np.where(over, 1.0 / np.maximum(sums, 1e-300), 1.0)
        weight = weight * scale[flat]

    # per-cell population cap (systematic resample, cell mass preserved)
    counts = np.bincount(flat, minlength=geo.n_cells)
    cap = cfg.max_particles_per_cell
    if len(weight) > cfg.max_particles_total:
        cap = max(4, cfg.max_particles_total // max(1, int(np.count_nonzero(counts))))
    crowded = np.flatnonzero(counts > cap)
    if len(crowded) > 0:
        order = np.argsort(flat, kind="stable")
        pos, vel, weight, flat = pos[order], vel[order], weight[order], flat[order]
        starts = np.searchsorted(flat, crowded, side="left")
        ends = np.searchsorted(flat, crowded, side="right")
        keep_mask = np.ones(len(weight), dtype=bool)
        new_pos, new_vel, new_w, new_flat = [], [], [], []
        for c, s, e in zip(crowded, starts, ends):
            w_cell = weight[s:e]
            total = w_cell.sum()
            if total <= 0:
                keep_mask[s:e] = False
                continue
            picks = _systematic_resample(w_cell, cap, float(rng.random()))
            keep_mask[s:e] = False
            new_pos.append(pos[s:e][picks])
            new_vel.append(vel[s:e][picks])
            new_w.append(np.full(cap, total / cap))
            new_flat.append(np.full(cap, c, dtype=flat.dtype))
        pos = np.concatenate([pos[keep_mask]] + new_pos)
        vel = np.concatenate([vel[keep_mask]] + new_vel)
        weight = np.concatenate([weight[keep_mask]] + new_w)
        flat = np.concatenate([flat[keep_mask]] + new_flat)

    # cell moments
    n_cells = geo.n_cells
    sums = np.bincount(flat, weights=weight, minlength=n_cells)
    counts = np.bincount(flat, minlength=n_cells)
    has = sums > 0
    safe = np.where(has, sums, 1.0)
    mx = np.bincount(flat, weights=weight * vel[:, 0], minlength=n_cells) / safe
    my = np.bincount(flat, weights=weight * vel[:, 1], minlength=n_cells) / safe
    dx = vel[:, 0] - mx[flat]
    dy = vel[:, 1] - my[flat]
    cxx = np.bincount(flat, weights=weight * dx * dx, minlength=n_cells) / safe
    cxy = np.bincount(flat, weights=weight * dx * dy, minlength=n_cells) / safe
    cyy = np.bincount(flat, weights=weight * dy * dy, minlength=n_cells) / safe

    shape = (geo.height_cells, geo.width_cells)
    prior = cfg.occupancy_prior
    occupancy = np.where(has, prior + (1.0 - prior) * np.minimum(sums, 1.0), prior)
    vel_mean = np.zeros(shape + (2,))
    vel_mean[..., 0] = np.where(has, mx, 0.0).reshape(shape)
    vel_mean[..., 1] = np.where(has, my, 0.0).reshape(shape)
    vel_cov = np.zeros(shape + (2, 2))
    vel_cov[..., 0, 0] = np.where(has, cxx, 0.0).reshape(shape)
    vel_cov[..., 0, 1] = np.where(has, cxy, 0.0).reshape(shape)
    vel_cov[..., 1, 0] = vel_cov[..., 0, 1]
    vel_cov[..., 1, 1] = np.where(has, cyy, 0.0).reshape(shape)

    return GridMap(
        geometry=geo,
        config=cfg,
        occupancy=occupancy.reshape(shape),
        vel_mean=vel_mean,
        vel_cov=vel_cov,
        particle_count=counts.reshape(shape),
        timestamp=grid.timestamp + dt,
        particle_pos=pos,
        particle_vel=vel,
        particle_weight=weight,
    )


# ---------------------------------------------------------------------------
# dynamic-cell classification


def mahalanobis_to_static(cell: GridCell, config: GridConfig | None = None) -> float:
    """Mahalanobis distance between a cell's velocity and zero velocity.

    The covariance is regularized with a small diagonal before inversion so
    zero-spread particle sets stay well defined.
    """
    config = config or GridConfig()
    v = np.asarray(cell.vel_mean, dtype=float)
    cov = np.asarray(cell.vel_cov, dtype=float)
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(cov))):
        raise ValueError("non-finite velocity statistics")
    eps = config.cov_regularization
    a = cov[0, 0] + eps
    b = cov[0, 1]
    d = cov[1, 1] + eps
    det = a * d - b * b
    q = (d * v[0] * v[0] - 2.0 * b * v[0] * v[1] + a * v[1] * v[1]) / det
    return math.sqrt(max(q, 0.0))


def classify_dynamic(cell: GridCell, cfg: DynamicCellConfig,
                     grid_config: GridConfig | None = None) -> bool:
    """A cell is dynamic when well occupied and clearly moving."""
    if cell.occupancy <= cfg.occupancy_threshold:
        return False
    return mahalanobis_to_static(cell, grid_config) > cfg.mahalanobis_threshold


def dynamic_mask(grid: GridMap, cfg: DynamicCellConfig) -> np.ndarray:
    """Vectorized classify_dynamic over the whole grid."""
    eps = grid.config.cov_regularization
    a = grid.vel_cov[..., 0, 0] + eps
    b = grid.vel_cov[..., 0, 1]
    d = grid.vel_cov[..., 1, 1] + eps
    det = a * d - b * b
    vx = grid.vel_mean[..., 0]
    vy = grid.vel_mean[..., 1]
    q = (d * vx * vx - 2.0 * b * vx * vy + a * vy * vy) / det
    q = np.maximum(q, 0.0)
    return (grid.occupancy > cfg.occupancy_threshold) & (q > cfg.mahalanobis_threshold ** 2)


# ---------------------------------------------------------------------------
# snapshot export


def save_snapshot(grid: GridMap, path) -> None:
    """Dump a grid snapshot: one header line, then one line per cell.

    Header: width height cell_size origin_x origin_y timestamp.
    Cells (row-major): occupancy vx vy cov_xx cov_xy cov_yy.
    """
    geo = grid.geometry
    header = f"{geo.width_cells} {geo.height_cells} {geo.cell_size!r} " \
             f"{geo.origin[0]!r} {geo.origin[1]!r} {grid.timestamp!r}"
    records = np.column_stack([
        grid.occupancy.ravel(),
        grid.vel_mean[..., 0].ravel(),
        grid.vel_mean[..., 1].ravel(),
        grid.vel_cov[..., 0, 0].ravel(),
        grid.vel_cov[..., 0, 1].ravel(),
        grid.vel_cov[..., 1, 1].ravel(),
    ])
    np.savetxt(path, records, header=header, comments="# ")


def load_snapshot(path, config: GridConfig | None = None) -> GridMap:
    with open(path) as fh:
        header = fh.readline().lstrip("# ").split()
    w, h = int(header[0]), int(header[1])
    cell_size, ox, oy, ts = (float(v) for v in header[2:6])
    records = np.loadtxt(path, skiprows=1).reshape(h * w, 6)
    geo = GridGeometry(w, h, cell_size, (ox, oy))
    grid = GridMap.create(geo, config, timestamp=ts)
    shape = (h, w)
    grid.occupancy = records[:, 0].reshape(shape)
    grid.vel_mean = np.stack([records[:, 1].reshape(shape), records[:, 2].reshape(shape)], axis=-1)
    cov = np.zeros(shape + (2, 2))
    cov[..., 0, 0] = records[:, 3].reshape(shape)
    cov[..., 0, 1] = records[:, 4].reshape(shape)
    cov[..., 1, 0] = records[:, 4].reshape(shape)
    cov[..., 1, 1] = records[:, 5].reshape(shape)
    grid.vel_cov = cov
    return grid


def save_occupancy_image(grid: GridMap, path) -> None:
    """Grayscale occupancy render, 8-bit, row 0 of the grid at the bottom."""
    from PIL import Image

    intensity = np.clip(grid.occupancy * 255.0, 0, 255).astype(np.uint8)
    Image.fromarray(intensity[::-1, :], mode="L").save(path)


__all__ = [
    "LaserScan", "GridGeometry", "GridCell", "MeasurementGrid", "GridMap",
    "inverse_sensor_model", "grid_update", "mahalanobis_to_static",
    "classify_dynamic", "dynamic_mask", "save_snapshot", "load_snapshot",
    "save_occupancy_image",
]
