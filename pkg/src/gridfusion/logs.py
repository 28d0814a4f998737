"""On-disk formats: hypothesis streams, per-frame JSON log, metrics CSV.

Hypothesis stream lines are whitespace separated with fixed field order:
timestamp track_id x y orientation length width speed yaw_rate existence.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .evaluate import HypRecord, VehicleMetrics
from .tracker import BoxHypothesis

STREAM_FIELDS = ("timestamp", "track_id", "x", "y", "orientation",
                 "length", "width", "speed", "yaw_rate", "existence")


def record_from_box(box: BoxHypothesis) -> HypRecord:
    return HypRecord(
        timestamp=box.timestamp, track_id=box.track_id,
        x=float(box.center[0]), y=float(box.center[1]),
        orientation=box.orientation, length=box.length, width=box.width,
        speed=box.speed, yaw_rate=box.yaw_rate, existence=box.existence,
    )


def write_stream(records: list[HypRecord], path) -> None:
    with open(path, "w") as fh:
        fh.write("# " + " ".join(STREAM_FIELDS) + "\n")
        for r in records:
            fh.write(f"{r.timestamp:.6f} {r.track_id} {r.x:.6f} {r.y:.6f} "
                     f"{r.orientation:.9f} {r.length:.4f} {r.width:.4f} "
                     f"{r.speed:.6f} {r.yaw_rate:.6f} {r.existence:.4f}\n")


def read_stream(path) -> list[HypRecord]:
    records = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        records.append(HypRecord(
            timestamp=float(parts[0]), track_id=int(parts[1]),
            x=float(parts[2]), y=float(parts[3]), orientation=float(parts[4]),
            length=float(parts[5]), width=float(parts[6]),
            speed=float(parts[7]), yaw_rate=float(parts[8]),
            existence=float(parts[9]),
        ))
    return records


# ---------------------------------------------------------------------------
# frame log (JSON lines, one object per frame)


def box_to_json(box: BoxHypothesis) -> dict:
    return {
        "track_id": box.track_id,
        "center": [round(float(box.center[0]), 6), round(float(box.center[1]), 6)],
        "orientation": round(box.orientation, 9),
        "extent": [round(box.length, 4), round(box.width, 4)],
        "speed": round(box.speed, 6),
        "yaw_rate": round(box.yaw_rate, 6),
        "existence": round(box.existence, 4),
    }


class FrameLogWriter:
    def __init__(self, path, scenario_name: str, seed: int):
        self._fh = open(path, "w")
        self._fh.write(json.dumps({"scenario": scenario_name, "seed": seed}) + "\n")

    def write_frame(self, frame: dict) -> None:
        self._fh.write(json.dumps(frame) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_frame_log(path) -> tuple[dict, list[dict]]:
    lines = Path(path).read_text().splitlines()
    header = json.loads(lines[0])
    return header, [json.loads(line) for line in lines[1:] if line.strip()]


# ---------------------------------------------------------------------------
# metrics CSV shaped like the evaluation table


def _fmt(value, digits: int) -> str:
    if value is None:
        return ""
    return f"{value:.{digits}f}"


def write_metrics_csv(path, rows: list[tuple[str, str, dict[int, VehicleMetrics]]],
                      include_fusion: bool = True) -> None:
    """rows: (sequence, sensor set, per-vehicle metrics) triples.

    Layout mirrors the evaluation table: per sequence, an O_T row, an O_F
    row and a % row; vehicle columns for position RMSE, orientation RMSE
    and track duration.
    """
    vehicle_ids = sorted({vid for _, _, m in rows for vid in m})
    header = ["sequence", "sensors", "row"]
    for metric in ("rmse_pos", "rmse_ori", "duration"):
        for vid in vehicle_ids:
            header.append(f"{metric}_v{vid}")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for sequence, sensors, metrics in rows:
            def cells(getter, digits):
                return [_fmt(getter(metrics.get(vid)) if metrics.get(vid) else None, digits)
                        for vid in vehicle_ids]

            writer.writerow([sequence, sensors, "O_T"]
                            + cells(lambda m: m.rmse_pos_t, 2)
                            + cells(lambda m: m.rmse_ori_t, 2)
                            + cells(lambda m: m.duration_t, 1))
            if include_fusion:
                writer.writerow([sequence, sensors, "O_F"]
                                + cells(lambda m: m.rmse_pos_f, 2)
                                + cells(lambda m: m.rmse_ori_f, 2)
                                + cells(lambda m: m.duration_f, 1))
                writer.writerow([sequence, sensors, "%"]
                                + cells(lambda m: m.pct_pos(), 2)
                                + cells(lambda m: m.pct_ori(), 2)
                                + cells(lambda m: m.pct_dur(), 2))


def write_error_series(out_dir, label: str, rows) -> None:
    """Plot-ready per-frame error series: one file per metric."""
    out_dir = Path(out_dir)
    with open(out_dir / f"error_position_{label}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "error"])
        for t, pe, _ in rows:
            w.writerow([f"{t:.6f}", f"{pe:.6f}"])
    with open(out_dir / f"error_orientation_{label}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "error"])
        for t, _, oe in rows:
            w.writerow([f"{t:.6f}", f"{oe:.6f}"])


__all__ = [
    "STREAM_FIELDS", "record_from_box", "write_stream", "read_stream",
    "box_to_json", "FrameLogWriter", "read_frame_log",
    "write_metrics_csv", "write_error_series",
]
