"""Feature-based point-object tracker over box hypotheses.

Per-track extended Kalman filter on the state (x, y, orientation, speed,
yaw rate) with CTRV prediction, nearest-neighbor association and an
existence score for birth/death. New tracks take the longitudinal prior:
orientation equals the ego heading, so cross traffic starts misaligned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .config import TrackerConfig
from .geometry import rect_corners, wrap_angle

_STATE_DIM = 5  # (x, y, orientation, speed, yaw_rate)


@dataclass(frozen=True)
class BoxHypothesis:
    """Oriented box object state at one timestamp."""

    track_id: int
    center: np.ndarray
    orientation: float
    length: float
    width: float
    speed: float
    yaw_rate: float
    state_cov: np.ndarray
    timestamp: float
    existence: float = 1.0

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ValueError("box extent must be positive")

    @property
    def corners(self) -> np.ndarray:
        """Corner order: front-left, front-right, rear-right, rear-left."""
        return rect_corners(self.center, self.orientation, self.length, self.width)

    def state_vector(self) -> np.ndarray:
        return np.array([self.center[0], self.center[1], self.orientation,
                         self.speed, self.yaw_rate])


@dataclass(frozen=True)
class Detection:
    position: np.ndarray
    source: str  # "radar" or "laser_boxfit"
    timestamp: float
    orientation: float | None = None
    extent: tuple[float, float] | None = None


def _process_noise(cfg: TrackerConfig, dt: float) -> np.ndarray:
    stds = np.asarray(cfg.process_noise)
    return np.diag(stds ** 2) * dt


def _ctrv_f(state: np.ndarray, dt: float, omega_min: float) -> tuple[np.ndarray, np.ndarray]:
    """CTRV transition and its Jacobian."""
    x, y, th, v, om = state
    F = np.eye(_STATE_DIM)
    out = state.copy()
    if abs(om) >= omega_min:
        th1 = th + om * dt
        s0, c0 = math.sin(th), math.cos(th)
        s1, c1 = math.sin(th1), math.cos(th1)
        r = v / om
        out[0] = x + r * (s1 - s0)
        out[1] = y + r * (-c1 + c0)
        out[2] = wrap_angle(th1)
        F[0, 2] = r * (c1 - c0)
        F[0, 3] = (s1 - s0) / om
        F[0, 4] = r * c1 * dt - (v / om ** 2) * (s1 - s0)
        F[1, 2] = r * (s1 - s0)
        F[1, 3] = (-c1 + c0) / om
        F[1, 4] = r * s1 * dt - (v / om ** 2) * (-c1 + c0)
        F[2, 4] = dt
    else:
        s0, c0 = math.sin(th), math.cos(th)
        out[0] = x + v * c0 * dt
        out[1] = y + v * s0 * dt
        out[2] = wrap_angle(th + om * dt)
        F[0, 2] = -v * s0 * dt
        F[0, 3] = c0 * dt
        F[0, 4] = -v * s0 * dt * dt / 2.0
        F[1, 2] = v * c0 * dt
        F[1, 3] = s0 * dt
        F[1, 4] = v * c0 * dt * dt / 2.0
        F[2, 4] = dt
    return out, F


def cv_predict(state: BoxHypothesis, dt: float,
               cfg: TrackerConfig | None = None) -> BoxHypothesis:
    """Constant-velocity prediction: straight-line displacement along heading."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    cfg = cfg or TrackerConfig()
    x = state.state_vector()
    c, s = math.cos(x[2]), math.sin(x[2])
    center = state.center + np.array([c, s]) * x[3] * dt
    F = np.eye(_STATE_DIM)
    F[0, 2] = -x[3] * s * dt
    F[0, 3] = c * dt
    F[1, 2] = x[3] * c * dt
    F[1, 3] = s * dt
    cov = F @ state.state_cov @ F.T + _process_noise(cfg, dt)
    return replace(state, center=center, state_cov=cov,
                   timestamp=state.timestamp + dt)


def ctrv_predict(state: BoxHypothesis, dt: float,
                 cfg: TrackerConfig | None = None) -> BoxHypothesis:
    """Constant turn rate and velocity prediction along a circular arc."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    cfg = cfg or TrackerConfig()
    x, F = _ctrv_f(state.state_vector(), dt, cfg.ctrv_omega_min)
    cov = F @ state.state_cov @ F.T + _process_noise(cfg, dt)
    return replace(state, center=x[:2], orientation=float(x[2]),
                   state_cov=cov, timestamp=state.timestamp + dt)


def _update(state: np.ndarray, cov: np.ndarray, z: np.ndarray, H: np.ndarray,
            R: np.ndarray, angle_rows: tuple[int, ...] = ()) -> tuple[np.ndarray, np.ndarray]:
    innovation = z - H @ state
    for i in angle_rows:
        innovation[i] = wrap_angle(innovation[i])
    S = H @ cov @ H.T + R
    K = cov @ H.T @ np.linalg.inv(S)
    new_state = state + K @ innovation
    new_state[2] = wrap_angle(new_state[2])
    new_cov = (np.eye(_STATE_DIM) - K @ H) @ cov
    new_cov = 0.5 * (new_cov + new_cov.T)
    return new_state, new_cov


def _gate_distance(track: BoxHypothesis, det: Detection, cfg: TrackerConfig) -> float:
    S = track.state_cov[:2, :2] + np.eye(2) * cfg.meas_noise_pos ** 2
    d = np.asarray(det.position) - track.center
    return float(math.sqrt(max(d @ np.linalg.solve(S, d), 0.0)))


def _birth(det: Detection, track_id: int, ego_heading: float,
           cfg: TrackerConfig) -> BoxHypothesis:
    cov = np.diag([
        cfg.birth_pos_std ** 2, cfg.birth_pos_std ** 2,
        cfg.birth_orientation_std ** 2, cfg.birth_speed_std ** 2,
        cfg.birth_yaw_rate_std ** 2,
    ])
    return BoxHypothesis(
        track_id=track_id,
        center=np.asarray(det.position, dtype=float),
        orientation=wrap_angle(ego_heading),
        length=cfg.birth_length,
        width=cfg.birth_width,
        speed=0.0,
        yaw_rate=0.0,
        state_cov=cov,
        timestamp=det.timestamp,
        existence=cfg.birth_existence,
    )


def track_step(tracks: list[BoxHypothesis], detections: list[Detection],
               dt: float, cfg: TrackerConfig,
               ego_heading: float = 0.0) -> list[BoxHypothesis]:
    """One predict/associate/update/manage cycle.

    Unassigned radar detections spawn tracks aligned with the ego heading;
    misses decay existence geometrically and tracks below the death
    threshold are dropped.
    """
    predicted = [ctrv_predict(t, dt, cfg) for t in tracks]

    # greedy nearest-neighbor inside the gate
    pairs = []
    for ti, trk in enumerate(predicted):
        for di, det in enumerate(detections):
            d = _gate_distance(trk, det, cfg)
            if d <= cfg.gate_mahalanobis:
                pairs.append((d, ti, di))
    pairs.sort()
    assigned_t: dict[int, int] = {}
    assigned_d: set[int] = set()
    for d, ti, di in pairs:
        if ti in assigned_t or di in assigned_d:
            continue
        assigned_t[ti] = di
        assigned_d.add(di)

    out: list[BoxHypothesis] = []
    for ti, trk in enumerate(predicted):
        if ti not in assigned_t:
            missed = replace(trk, existence=trk.existence * cfg.miss_decay)
            if missed.existence >= cfg.death_threshold:
                out.append(missed)
            continue
        det = detections[assigned_t[ti]]
        x = trk.state_vector()
        if det.source == "laser_boxfit" and det.orientation is not None:
            H = np.zeros((3, _STATE_DIM))
            H[0, 0] = H[1, 1] = H[2, 2] = 1.0
            # the fitted box axis is ambiguous modulo pi
            meas_th = det.orientation
            if abs(wrap_angle(meas_th - x[2])) > math.pi / 2:
                meas_th = wrap_angle(meas_th + math.pi)
            z = np.array([det.position[0], det.position[1], meas_th])
            R = np.diag([cfg.meas_noise_pos ** 2, cfg.meas_noise_pos ** 2,
                         cfg.meas_noise_orientation ** 2])
            x, cov = _update(x, trk.state_cov, z, H, R, angle_rows=(2,))
        else:
            H = np.zeros((2, _STATE_DIM))
            H[0, 0] = H[1, 1] = 1.0
            R = np.eye(2) * cfg.meas_noise_pos ** 2
            x, cov = _update(x, trk.state_cov, np.asarray(det.position, dtype=float), H, R)
        length, width = trk.length, trk.width
        if det.extent is not None:
            length = (1 - cfg.extent_blend) * length + cfg.extent_blend * det.extent[0]
            width = (1 - cfg.extent_blend) * width + cfg.extent_blend * det.extent[1]
        existence = trk.existence + (1.0 - trk.existence) * cfg.hit_gain
        out.append(replace(
            trk, center=x[:2], orientation=float(x[2]), speed=float(x[3]),
            yaw_rate=float(x[4]), state_cov=cov, length=length, width=width,
            existence=existence,
        ))

    next_id = max((t.track_id for t in tracks), default=-1) + 1
    for di, det in enumerate(detections):
        if di in assigned_d or det.source != "radar":
            continue
        out.append(_birth(det, next_id, ego_heading, cfg))
        next_id += 1

    out.sort(key=lambda t: t.track_id)
    return out


# ---------------------------------------------------------------------------
# box fitting of pre-clustered laser points


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull, counter-clockwise, no repeated endpoint."""
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) <= 2:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def box_fit(points, timestamp: float = 0.0,
            min_points: int = 5, min_extent: float = 0.1) -> Detection | None:
    """Minimum-area oriented rectangle over a pre-clustered point set.

    Returns a laser_boxfit Detection with the longer-side axis as
    orientation (canonicalized into (-pi/2, pi/2]), or None when the
    cluster is too sparse to fit.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) < min_points:
        return None
    hull = _convex_hull(pts)
    if len(hull) == 1:
        center, angle, extent = hull[0], 0.0, (min_extent, min_extent)
    else:
        # the minimum-area rectangle has a side collinear with a hull edge
        edges = np.roll(hull, -1, axis=0) - hull
        angles = np.arctan2(edges[:, 1], edges[:, 0]) if len(hull) > 2 else \
            np.arctan2(edges[:1, 1], edges[:1, 0])
        best = None
        for ang in np.atleast_1d(angles):
            c, s = math.cos(ang), math.sin(ang)
            u = pts[:, 0] * c + pts[:, 1] * s
            v = -pts[:, 0] * s + pts[:, 1] * c
            du, dv = u.max() - u.min(), v.max() - v.min()
            area = du * dv
            if best is None or area < best[0] - 1e-12:
                cu, cv = (u.max() + u.min()) / 2, (v.max() + v.min()) / 2
                center = np.array([cu * c - cv * s, cu * s + cv * c])
                best = (area, ang, center, du, dv)
        _, ang, center, du, dv = best
        if du >= dv:
            angle, extent = ang, (du, dv)
        else:
            angle, extent = ang + math.pi / 2, (dv, du)
    angle = wrap_angle(angle)
    if angle <= -math.pi / 2:
        angle += math.pi
    elif angle > math.pi / 2:
        angle -= math.pi
    extent = (max(extent[0], min_extent), max(extent[1], min_extent))
    return Detection(position=center, source="laser_boxfit", timestamp=timestamp,
                     orientation=angle, extent=extent)


__all__ = ["BoxHypothesis", "Detection", "cv_predict", "ctrv_predict",
           "track_step", "box_fit"]
