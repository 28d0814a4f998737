"""Fused hypothesis construction and the three-candidate set.

The fused hypothesis takes its orientation from the associated cell
group's averaged velocity and its position from anchoring the box corner
visible to the ego vehicle onto the matching corner of the group's
oriented bounding region. The tracking hypothesis is always kept as a
candidate (its CTRV model handles curves better than the grid's CV
particles), and the previously selected hypothesis re-enters as a
predicted candidate.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .association import CellGroup
from .config import FusionConfig, TrackerConfig
from .geometry import points_in_rect, rot2d, to_box_frame, wrap_angle
from .tracker import BoxHypothesis, ctrv_predict

log = logging.getLogger(__name__)

# corner sign patterns in the box frame, index order
# front-left, front-right, rear-right, rear-left
_CORNER_SIGNS = ((1, 1), (1, -1), (-1, -1), (-1, 1))


@dataclass(frozen=True)
class CandidateSet:
    """The competing hypotheses for one object at one frame."""

    tracking: BoxHypothesis | None
    fused: BoxHypothesis | None
    predicted: BoxHypothesis | None
    timestamp: float

    def present(self) -> list[tuple[str, BoxHypothesis]]:
        out = []
        if self.tracking is not None:
            out.append(("tracking", self.tracking))
        if self.fused is not None:
            out.append(("fused", self.fused))
        if self.predicted is not None:
            out.append(("predicted", self.predicted))
        return out


def fuse_orientation(box: BoxHypothesis, group: CellGroup,
                     cfg: FusionConfig | None = None) -> BoxHypothesis:
    """Rotate the hypothesis to the group's averaged velocity direction.

    Near-static groups leave the orientation untouched: the direction of a
    velocity below the gate is noise.
    """
    cfg = cfg or FusionConfig()
    if group.is_empty:
        raise ValueError("cannot fuse orientation from an empty cell group")
    v = group.mean_velocity
    if float(np.hypot(v[0], v[1])) <= cfg.min_speed_for_heading:
        return box
    return replace(box, orientation=wrap_angle(math.atan2(v[1], v[0])))


def visible_corner(box: BoxHypothesis, ego_position: np.ndarray) -> int:
    """Index of the box corner nearest the ego vehicle.

    Ties pick the lowest index under the fixed corner order. An ego inside
    the box is degenerate; the nearest corner is still returned.
    """
    ego = np.asarray(ego_position, dtype=float)
    if bool(points_in_rect(ego[None, :], box.center, box.orientation,
                           box.length, box.width)[0]):
        log.warning("ego position inside box %d; visible corner is degenerate",
                    box.track_id)
    d2 = np.sum((box.corners - ego) ** 2, axis=1)
    return int(np.argmin(d2))


def fuse_position(box_rotated: BoxHypothesis, group: CellGroup,
                  ego_position: np.ndarray) -> BoxHypothesis:
    """Shift the rotated hypothesis onto the cell group.

    The group's bounding extremes are taken in the fused box frame; the
    box is translated so its ego-visible corner lands on the matching
    corner of that bounding region. Extent and orientation are unchanged.
    """
    if group.is_empty:
        raise ValueError("cannot fuse position from an empty cell group")
    corner = visible_corner(box_rotated, ego_position)
    su, sv = _CORNER_SIGNS[corner]
    local = to_box_frame(group.cell_centers, box_rotated.center, box_rotated.orientation)
    u = local[:, 0].max() if su > 0 else local[:, 0].min()
    v = local[:, 1].max() if sv > 0 else local[:, 1].min()
    group_corner = box_rotated.center + rot2d(box_rotated.orientation) @ np.array([u, v])
    box_corner = box_rotated.corners[corner]
    return replace(box_rotated, center=box_rotated.center + (group_corner - box_corner))


def build_candidates(track: BoxHypothesis | None, group: CellGroup,
                     previous_selected: BoxHypothesis | None, dt: float,
                     ego: np.ndarray,
                     fusion_cfg: FusionConfig | None = None,
                     tracker_cfg: TrackerConfig | None = None) -> CandidateSet:
    """Assemble the tracking/fused/predicted candidates for one object.

    The fused candidate needs both a track and a non-empty group; the
    predicted candidate carries the previously selected hypothesis one
    step forward, which bridges tracker dropouts.
    """
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    fused = None
    if track is not None and not group.is_empty:
        fused = fuse_position(fuse_orientation(track, group, fusion_cfg), group, ego)
    predicted = None
    if previous_selected is not None:
        predicted = ctrv_predict(previous_selected, dt, tracker_cfg)
        if track is not None:
            # candidates of one object share identity and extent
            predicted = replace(predicted, track_id=track.track_id,
                                length=track.length, width=track.width)
    timestamp = next(
        (b.timestamp for b in (track, fused, predicted) if b is not None), 0.0
    )
    return CandidateSet(tracking=track, fused=fused, predicted=predicted,
                        timestamp=timestamp)


__all__ = ["CandidateSet", "fuse_orientation", "visible_corner",
           "fuse_position", "build_candidates"]
