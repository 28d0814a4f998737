"""Association between dynamic grid cells and one box hypothesis.

Footprint cells (plus a small vicinity margin) seed an 8-connected region
grow over the dynamic-cell mask; if nothing is found, the search repeats
over a footprint enlarged by a configurable factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .config import AssociationConfig, DynamicCellConfig
from .geometry import to_box_frame
from .grid import GridMap, dynamic_mask
from .tracker import BoxHypothesis

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class CellGroup:
    """Dynamic cells associated with one hypothesis, with summary statistics."""

    cell_indices: frozenset[tuple[int, int]]
    mean_velocity: np.ndarray | None
    centroid: np.ndarray | None
    count: int
    bbox_in_box_frame: tuple[tuple[float, float], tuple[float, float]] | None
    cell_centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    cell_occupancy: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def is_empty(self) -> bool:
        return self.count == 0

    @classmethod
    def empty(cls) -> "CellGroup":
        return cls(frozenset(), None, None, 0, None)


def cells_under_footprint(grid: GridMap, box: BoxHypothesis,
                          margin: float = 0.0) -> list[tuple[int, int]]:
    """Cells whose centers lie inside the box inflated by ``margin``.

    Returned row-major sorted. A box fully outside the grid yields [].
    """
    geo = grid.geometry
    half_diag = 0.5 * np.hypot(box.length + 2 * margin, box.width + 2 * margin)
    r0 = int(np.floor((box.center[1] - half_diag - geo.y_min) / geo.cell_size))
    r1 = int(np.floor((box.center[1] + half_diag - geo.y_min) / geo.cell_size))
    c0 = int(np.floor((box.center[0] - half_diag - geo.x_min) / geo.cell_size))
    c1 = int(np.floor((box.center[0] + half_diag - geo.x_min) / geo.cell_size))
    r0, r1 = max(r0, 0), min(r1, geo.height_cells - 1)
    c0, c1 = max(c0, 0), min(c1, geo.width_cells - 1)
    if r0 > r1 or c0 > c1:
        return []
    rows, cols = np.meshgrid(np.arange(r0, r1 + 1), np.arange(c0, c1 + 1), indexing="ij")
    rows, cols = rows.ravel(), cols.ravel()
    centers = geo.cell_centers(rows, cols)
    rel = centers - box.center
    c, s = np.cos(box.orientation), np.sin(box.orientation)
    u = rel[:, 0] * c + rel[:, 1] * s
    v = -rel[:, 0] * s + rel[:, 1] * c
    inside = (np.abs(u) <= box.length / 2 + margin) & (np.abs(v) <= box.width / 2 + margin)
    return list(zip(rows[inside].tolist(), cols[inside].tolist()))


def grow_dynamic_region(grid: GridMap, seeds, cfg: DynamicCellConfig,
                        mask=None) -> set[tuple[int, int]]:
    """8-connected components of dynamic cells reachable from dynamic seeds."""
    if mask is None:
        mask = dynamic_mask(grid, cfg)
    labels, _ = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    wanted = {int(labels[r, c]) for r, c in seeds if mask[r, c]}
    wanted.discard(0)
    if not wanted:
        return set()
    member = np.isin(labels, sorted(wanted))
    rows, cols = np.nonzero(member)
    return set(zip(rows.tolist(), cols.tolist()))


def _build_group(grid: GridMap, box: BoxHypothesis, cells: set[tuple[int, int]],
                 cfg: AssociationConfig) -> CellGroup:
    if not cells:
        return CellGroup.empty()
    idx = np.array(sorted(cells))
    rows, cols = idx[:, 0], idx[:, 1]
    centers = grid.geometry.cell_centers(rows, cols)
    occ = grid.occupancy[rows, cols]
    vel = grid.vel_mean[rows, cols]
    if cfg.occupancy_weighted_velocity:
        w = occ / occ.sum()
    else:
        w = np.full(len(occ), 1.0 / len(occ))
    mean_velocity = (vel * w[:, None]).sum(axis=0)
    local = to_box_frame(centers, box.center, box.orientation)
    bbox = ((float(local[:, 0].min()), float(local[:, 0].max())),
            (float(local[:, 1].min()), float(local[:, 1].max())))
    return CellGroup(
        cell_indices=frozenset(cells),
        mean_velocity=mean_velocity,
        centroid=centers.mean(axis=0),
        count=len(cells),
        bbox_in_box_frame=bbox,
        cell_centers=centers,
        cell_occupancy=occ,
    )


def associate(grid: GridMap, box: BoxHypothesis, cfg: AssociationConfig,
              mask=None) -> CellGroup:
    """Two-phase association of dynamic cells to a hypothesis.

    Phase 1 grows from dynamic cells under the (margin-inflated) footprint;
    phase 2 only runs when phase 1 comes up empty and repeats the search
    over the footprint enlarged by ``fallback_scale``.
    """
    if mask is None:
        mask = dynamic_mask(grid, cfg.dynamic)
    seeds = cells_under_footprint(grid, box, cfg.vicinity_margin)
    cells = grow_dynamic_region(grid, seeds, cfg.dynamic, mask=mask)
    if not cells:
        scale = cfg.fallback_scale
        enlarged = replace(
            box,
            length=box.length * scale,
            width=box.width * (scale if cfg.fallback_scale_width else 1.0),
        )
        seeds = cells_under_footprint(grid, enlarged, cfg.vicinity_margin)
        cells = grow_dynamic_region(grid, seeds, cfg.dynamic, mask=mask)
    return _build_group(grid, box, cells, cfg)


__all__ = ["CellGroup", "cells_under_footprint", "grow_dynamic_region", "associate"]
