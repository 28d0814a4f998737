"""Run metrics: matched-frame RMSE, track duration and percentage rows.

Hypothesis streams from tracking and from the fusion are compared only on
frames where both produced a record for the same object (within a small
time tolerance); unmatched records are excluded from RMSE but still count
toward the track duration, which accumulates inter-record gaps shorter
than the continuity limit.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .config import EvalConfig
from .geometry import wrap_angle


@dataclass(frozen=True)
class HypRecord:
    """One hypothesis-stream record (fixed field order in the text log)."""

    timestamp: float
    track_id: int
    x: float
    y: float
    orientation: float
    length: float
    width: float
    speed: float
    yaw_rate: float
    existence: float


def match_frames(a: list[HypRecord], b: list[HypRecord],
                 tol: float = 0.04) -> list[tuple[HypRecord, HypRecord]]:
    """Pair same-object records whose timestamps differ by at most tol.

    Both streams must be time-sorted. Matching is greedy per object in
    time order; each record matches at most once.
    """
    by_id_b: dict[int, list[HypRecord]] = defaultdict(list)
    for rec in b:
        by_id_b[rec.track_id].append(rec)
    pairs = []
    cursor: dict[int, int] = defaultdict(int)
    for rec in a:
        cands = by_id_b.get(rec.track_id)
        if not cands:
            continue
        i = cursor[rec.track_id]
        while i < len(cands) and cands[i].timestamp < rec.timestamp - tol:
            i += 1
        cursor[rec.track_id] = i
        if i < len(cands) and abs(cands[i].timestamp - rec.timestamp) <= tol:
            pairs.append((rec, cands[i]))
            cursor[rec.track_id] = i + 1
    return pairs


def position_errors(records: list[HypRecord], truth) -> np.ndarray:
    """Euclidean center errors; truth(track_id, t) -> (center, heading) or None."""
    errs = []
    for rec in records:
        gt = truth(rec.track_id, rec.timestamp)
        if gt is None:
            continue
        center, _ = gt
        errs.append(math.hypot(rec.x - center[0], rec.y - center[1]))
    return np.asarray(errs)


def orientation_errors(records: list[HypRecord], truth,
                       modulo_pi: bool = False) -> np.ndarray:
    errs = []
    for rec in records:
        gt = truth(rec.track_id, rec.timestamp)
        if gt is None:
            continue
        _, heading = gt
        d = abs(wrap_angle(rec.orientation - heading))
        if modulo_pi and d > math.pi / 2:
            d = math.pi - d
        errs.append(d)
    return np.asarray(errs)


def _rmse(errors: np.ndarray) -> float | None:
    if len(errors) == 0:
        return None
    return float(np.sqrt(np.mean(np.square(errors))))


def rmse_position(records: list[HypRecord], truth) -> float | None:
    """RMS Euclidean center error; None when nothing matched."""
    return _rmse(position_errors(records, truth))


def rmse_orientation(records: list[HypRecord], truth,
                     modulo_pi: bool = False) -> float | None:
    """RMS wrapped heading error, optionally modulo pi."""
    return _rmse(orientation_errors(records, truth, modulo_pi))


def track_duration(records: list[HypRecord], gap_limit: float = 0.1) -> float:
    """Accumulated time over gaps strictly shorter than ``gap_limit``."""
    if len(records) < 2:
        return 0.0
    times = np.array([r.timestamp for r in records])
    gaps = np.diff(times)
    return float(gaps[gaps < gap_limit].sum())


def percent_rows(metric_t: float, metric_f: float, kind: str = "error") -> float | None:
    """Percentage improvement row.

    Errors improve downward: 100 * (T - F) / T. Durations extend upward:
    100 * (F - T) / T. A zero baseline is undefined and yields None.
    """
    if metric_t == 0:
        return None
    if kind == "error":
        return 100.0 * (metric_t - metric_f) / metric_t
    if kind == "duration":
        return 100.0 * (metric_f - metric_t) / metric_t
    raise ValueError(f"unknown metric kind {kind!r}")


# ---------------------------------------------------------------------------
# per-vehicle evaluation of a run


def assign_to_vehicles(records: list[HypRecord], scenario,
                       cfg: EvalConfig) -> dict[int, list[HypRecord]]:
    """Re-key hypothesis records to ground-truth vehicles by proximity.

    Each record goes to the nearest vehicle within the assignment radius;
    when several records land on one vehicle in the same frame, the
    nearest survives. Returned streams carry the vehicle id as track_id.
    """
    from dataclasses import replace

    per_vehicle: dict[int, dict[float, tuple[float, HypRecord]]] = defaultdict(dict)
    for rec in records:
        best = None
        for spec in scenario.objects:
            gt = scenario.truth_pose(spec.object_id, rec.timestamp)
            if gt is None:
                continue
            d = math.hypot(rec.x - gt[0][0], rec.y - gt[0][1])
            if d <= cfg.assign_radius and (best is None or d < best[0]):
                best = (d, spec.object_id)
        if best is None:
            continue
        d, vid = best
        slot = per_vehicle[vid].get(rec.timestamp)
        if slot is None or d < slot[0]:
            per_vehicle[vid][rec.timestamp] = (d, replace(rec, track_id=vid))
    return {
        vid: [entry[1] for _, entry in sorted(frames.items())]
        for vid, frames in per_vehicle.items()
    }


@dataclass
class VehicleMetrics:
    vehicle_id: int
    rmse_pos_t: float | None
    rmse_pos_f: float | None
    rmse_ori_t: float | None
    rmse_ori_f: float | None
    duration_t: float
    duration_f: float
    matched_frames: int

    def pct_pos(self):
        if self.rmse_pos_t in (None, 0) or self.rmse_pos_f is None:
            return None
        return percent_rows(self.rmse_pos_t, self.rmse_pos_f, "error")

    def pct_ori(self):
        if self.rmse_ori_t in (None, 0) or self.rmse_ori_f is None:
            return None
        return percent_rows(self.rmse_ori_t, self.rmse_ori_f, "error")

    def pct_dur(self):
        if self.duration_t == 0:
            return None
        return percent_rows(self.duration_t, self.duration_f, "duration")


def evaluate_run(scenario, stream_t: list[HypRecord], stream_f: list[HypRecord],
                 cfg: EvalConfig | None = None) -> dict[int, VehicleMetrics]:
    """Per-vehicle metrics for one run (tracking stream vs fusion stream)."""
    cfg = cfg or EvalConfig()
    by_vehicle_t = assign_to_vehicles(stream_t, scenario, cfg)
    by_vehicle_f = assign_to_vehicles(stream_f, scenario, cfg)
    truth = scenario.truth_pose

    out: dict[int, VehicleMetrics] = {}
    for spec in scenario.objects:
        vid = spec.object_id
        recs_t = by_vehicle_t.get(vid, [])
        recs_f = by_vehicle_f.get(vid, [])
        pairs = match_frames(recs_t, recs_f, cfg.match_tolerance)
        matched_t = [p[0] for p in pairs]
        matched_f = [p[1] for p in pairs]
        out[vid] = VehicleMetrics(
            vehicle_id=vid,
            rmse_pos_t=rmse_position(matched_t, truth),
            rmse_pos_f=rmse_position(matched_f, truth),
            rmse_ori_t=rmse_orientation(matched_t, truth, cfg.orientation_modulo_pi),
            rmse_ori_f=rmse_orientation(matched_f, truth, cfg.orientation_modulo_pi),
            duration_t=track_duration(recs_t, cfg.gap_limit),
            duration_f=track_duration(recs_f, cfg.gap_limit),
            matched_frames=len(pairs),
        )
    return out


def per_frame_errors(records: list[HypRecord], truth,
                     modulo_pi: bool = False) -> list[tuple[float, float, float]]:
    """(timestamp, position error, orientation error) per record with truth."""
    rows = []
    for rec in records:
        gt = truth(rec.track_id, rec.timestamp)
        if gt is None:
            continue
        center, heading = gt
        pe = math.hypot(rec.x - center[0], rec.y - center[1])
        oe = abs(wrap_angle(rec.orientation - heading))
        if modulo_pi and oe > math.pi / 2:
            oe = math.pi - oe
        rows.append((rec.timestamp, pe, oe))
    return rows


__all__ = [
    "HypRecord", "match_frames", "rmse_position", "rmse_orientation",
    "position_errors", "orientation_errors", "track_duration", "percent_rows",
    "assign_to_vehicles", "VehicleMetrics", "evaluate_run", "per_frame_errors",
]
