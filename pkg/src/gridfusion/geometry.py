"""2D geometry helpers shared by the grid, simulator and fusion stages."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, TWO_PI)
    if wrapped <= 0.0:
        wrapped += TWO_PI
    return wrapped - math.pi


def wrap_angle_array(theta: np.ndarray) -> np.ndarray:
    wrapped = np.mod(np.asarray(theta, dtype=float) + np.pi, TWO_PI)
    wrapped = np.where(wrapped <= 0.0, wrapped + TWO_PI, wrapped)
    return wrapped - np.pi


def angle_diff(a: float, b: float) -> float:
    """Signed difference a - b wrapped to (-pi, pi]."""
    return wrap_angle(a - b)


def rot2d(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    heading: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


def rect_corners(center: np.ndarray, heading: float, length: float, width: float) -> np.ndarray:
    """Corners of an oriented rectangle, fixed order.

    Index 0: front-left, 1: front-right, 2: rear-right, 3: rear-left,
    where "front" is +length/2 along the heading and "left" is +width/2
    to the heading's left.
    """
    local = np.array(
        [
            [length / 2.0, width / 2.0],
            [length / 2.0, -width / 2.0],
            [-length / 2.0, -width / 2.0],
            [-length / 2.0, width / 2.0],
        ]
    )
    return np.asarray(center, dtype=float) + local @ rot2d(heading).T


def points_in_rect(
    points: np.ndarray,
    center: np.ndarray,
    heading: float,
    length: float,
    width: float,
    margin: float = 0.0,
) -> np.ndarray:
    """Boolean mask of points inside the (inflated) oriented rectangle.

    Boundary points count as inside (<=), matching the center-point
    rasterization convention used throughout.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(center, dtype=float)
    c, s = math.cos(heading), math.sin(heading)
    u = pts[:, 0] * c + pts[:, 1] * s
    v = -pts[:, 0] * s + pts[:, 1] * c
    return (np.abs(u) <= length / 2.0 + margin) & (np.abs(v) <= width / 2.0 + margin)


def to_box_frame(points: np.ndarray, center: np.ndarray, heading: float) -> np.ndarray:
    """World points expressed in the box frame (x along heading)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(center, dtype=float)
    c, s = math.cos(heading), math.sin(heading)
    return np.column_stack([pts[:, 0] * c + pts[:, 1] * s, -pts[:, 0] * s + pts[:, 1] * c])


def ray_segment_intersections(
    origin: np.ndarray,
    direction: np.ndarray,
    seg_a: np.ndarray,
    seg_b: np.ndarray,
) -> np.ndarray:
    """Ray parameter t for intersections with segments (vectorized).

    seg_a/seg_b are (M, 2) endpoint arrays. Returns an (M,) array of t
    values (distance along the unit direction), with np.inf where the ray
    misses the segment.
    """
    origin = np.asarray(origin, dtype=float)
    d = np.asarray(direction, dtype=float)
    a = np.atleast_2d(seg_a)
    b = np.atleast_2d(seg_b)
    e = b - a  # segment direction
    denom = d[0] * (-e[:, 1]) - d[1] * (-e[:, 0])
    rel = a - origin
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (rel[:, 0] * (-e[:, 1]) - rel[:, 1] * (-e[:, 0])) / denom
        u = (d[0] * rel[:, 1] - d[1] * rel[:, 0]) / denom
    valid = (np.abs(denom) > 1e-12) & (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
    return np.where(valid, t, np.inf)


def rays_segments_t(
    origin: np.ndarray,
    directions: np.ndarray,
    seg_a: np.ndarray,
    seg_b: np.ndarray,
) -> np.ndarray:
    """Ray/segment hit parameters for many rays against many segments.

    directions is (R, 2) unit vectors, seg_a/seg_b are (M, 2). Returns an
    (R, M) array of t values with np.inf where a ray misses a segment.
    """
    origin = np.asarray(origin, dtype=float)
    d = np.atleast_2d(directions)
    a = np.atleast_2d(seg_a)
    e = np.atleast_2d(seg_b) - a
    rel = a - origin
    denom = d[:, 0:1] * (-e[:, 1])[None, :] - d[:, 1:2] * (-e[:, 0])[None, :]
    t_num = rel[:, 0] * (-e[:, 1]) - rel[:, 1] * (-e[:, 0])
    with np.errstate(divide="ignore", invalid="ignore"):
        t = t_num[None, :] / denom
        u = (d[:, 0:1] * rel[:, 1][None, :] - d[:, 1:2] * rel[:, 0][None, :]) / denom
    valid = (np.abs(denom) > 1e-12) & (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
    return np.where(valid, t, np.inf)


def ray_rect_distance(
    origin: np.ndarray, direction: np.ndarray, corners: np.ndarray
) -> float:
    """Distance along a unit ray to the nearest edge of a rectangle, inf if missed."""
    a = corners
    b = np.roll(corners, -1, axis=0)
    return float(np.min(ray_segment_intersections(origin, direction, a, b)))


def nearest_point_on_rect(point: np.ndarray, corners: np.ndarray) -> np.ndarray:
    """Closest point on the rectangle boundary to an outside point.

    For a point inside the rectangle this still returns the nearest
    boundary point, which is the right answer for a solid obstacle.
    """
    point = np.asarray(point, dtype=float)
    best = None
    best_d2 = np.inf
    for i in range(4):
        a = corners[i]
        b = corners[(i + 1) % 4]
        e = b - a
        t = np.clip(np.dot(point - a, e) / np.dot(e, e), 0.0, 1.0)
        cand = a + t * e
        d2 = float(np.sum((point - cand) ** 2))
        if d2 < best_d2:
            best_d2 = d2
            best = cand
    return best
