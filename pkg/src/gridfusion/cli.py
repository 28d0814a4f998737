"""Command-line entry point.

Subcommands:
  run      execute one scenario end to end and write all artifacts
  suite    run the builtin scenario library over several seeds
  compare  percentage rows between two finished runs
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .config import PipelineConfig, apply_overrides
from .evaluate import percent_rows
from .pipeline import run_scenario
from .sim import ScenarioError, builtin_scenario_names, resolve_scenario


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None,
                        help="override the scenario seed")
    parser.add_argument("--no-fusion", action="store_true",
                        help="tracking only; metrics contain O_T rows only")
    parser.add_argument("--tracker-sensors", choices=("radar", "radar+lidar"),
                        default="radar", help="tracker measurement inputs")
    parser.add_argument("--dump-grid-every", type=int, default=0, metavar="N",
                        help="write a grid snapshot every N frames")
    parser.add_argument("--config", action="append", default=[], metavar="KEY=VALUE",
                        help="config override, dotted path (repeatable)")


def _build_config(args) -> PipelineConfig:
    cfg = PipelineConfig()
    cfg.fusion_enabled = not args.no_fusion
    cfg.tracker_sensors = args.tracker_sensors
    return apply_overrides(cfg, args.config)


def _cmd_run(args) -> int:
    try:
        scenario = resolve_scenario(args.scenario)
        cfg = _build_config(args)
    except (ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        result = run_scenario(scenario, cfg, seed=args.seed, out_dir=args.out,
                              dump_grid_every=args.dump_grid_every)
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(f"{scenario.name}: {result.n_frames} frames, "
          f"{len(result.stream_tracking)} tracking records, "
          f"{len(result.stream_selected)} selected records -> {args.out}")
    return 0


def _cmd_suite(args) -> int:
    try:
        cfg = _build_config(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    names = args.scenarios.split(",") if args.scenarios else builtin_scenario_names()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base_seed = args.seed if args.seed is not None else 0
    rows = []
    for name in names:
        try:
            scenario = resolve_scenario(name)
        except ScenarioError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        for k in range(args.seeds):
            seed = base_seed + k
            run_dir = out / f"{name}_seed{seed}"
            result = run_scenario(scenario, cfg, seed=seed, out_dir=run_dir,
                                  dump_grid_every=args.dump_grid_every)
            rows.append((f"{name}/seed{seed}", cfg.tracker_sensors, result.metrics))
            print(f"done {name} seed {seed}")
    from .logs import write_metrics_csv

    write_metrics_csv(out / "suite_metrics.csv", rows,
                      include_fusion=cfg.fusion_enabled)
    print(f"suite metrics -> {out / 'suite_metrics.csv'}")
    return 0


def _read_metrics(path: Path) -> dict[str, dict[str, float]]:
    table: dict[str, dict[str, float]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = row.pop("row")
            row.pop("sequence", None)
            row.pop("sensors", None)
            table[key] = {k: float(v) for k, v in row.items() if v != ""}
    return table


def _cmd_compare(args) -> int:
    a_dir, b_dir = Path(args.run_a), Path(args.run_b)
    try:
        info_a = json.loads((a_dir / "run_info.json").read_text())
        info_b = json.loads((b_dir / "run_info.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read run info: {exc}", file=sys.stderr)
        return 2
    if info_a["scenario"] != info_b["scenario"]:
        print(f"error: scenario mismatch: {info_a['scenario']!r} vs "
              f"{info_b['scenario']!r}", file=sys.stderr)
        return 2
    metrics_a = _read_metrics(a_dir / "metrics.csv")
    metrics_b = _read_metrics(b_dir / "metrics.csv")
    out_path = Path(args.out) if args.out else b_dir / "compare.csv"
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "column", "a", "b", "pct"])
        for row_key in ("O_T", "O_F"):
            if row_key not in metrics_a or row_key not in metrics_b:
                continue
            for col in sorted(set(metrics_a[row_key]) & set(metrics_b[row_key])):
                va, vb = metrics_a[row_key][col], metrics_b[row_key][col]
                kind = "duration" if col.startswith("duration") else "error"
                pct = percent_rows(va, vb, kind) if va != 0 else None
                writer.writerow([row_key, col, va, vb,
                                 "" if pct is None else f"{pct:.2f}"])
    print(f"comparison -> {out_path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gridfusion",
        description="Grid/track fusion pipeline: simulate, fuse, evaluate.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario")
    p_run.add_argument("--scenario", required=True,
                       help="scenario file path or builtin name "
                            f"({', '.join(builtin_scenario_names())})")
    p_run.add_argument("--out", required=True, help="output directory")
    _add_common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_suite = sub.add_parser("suite", help="run the builtin scenario library")
    p_suite.add_argument("--out", required=True, help="output directory")
    p_suite.add_argument("--seeds", type=int, default=3, help="seeds per scenario")
    p_suite.add_argument("--scenarios", default=None,
                         help="comma-separated subset of builtin names")
    _add_common(p_suite)
    p_suite.set_defaults(func=_cmd_suite)

    p_cmp = sub.add_parser("compare", help="percentage rows between two runs")
    p_cmp.add_argument("run_a", help="baseline run directory")
    p_cmp.add_argument("run_b", help="comparison run directory")
    p_cmp.add_argument("--out", default=None, help="output CSV path")
    p_cmp.set_defaults(func=_cmd_compare)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
