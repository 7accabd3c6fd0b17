"""Command-line operational surface: run, batch, compare, table.

Artifacts per seed: ``metrics.csv`` (step, n_components, n_confirmed,
sum_w_components, sum_w_tracks, mahal_closest, mahal_second), ``tracks.csv``
(step, track_id, x, y, p_xx, p_xy, p_yy, status), ``events.csv`` (step, kind,
id, x, y with kind one of robot/measurement/truth), plus a cross-seed
``summary.json`` and the echoed ``manifest.json``. Numeric fields carry 17
significant digits so every CSV parses back losslessly. The default output
root honors the ``GMPHD_SAT_OUT`` environment variable.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    ScenarioConfig,
    config_from_dict,
    config_to_dict,
    dump_config,
    load_config,
)
from .sim import RunResult, run_scenario

METRICS_HEADER = [
    "step",
    "n_components",
    "n_confirmed",
    "sum_w_components",
    "sum_w_tracks",
    "mahal_closest",
    "mahal_second",
]
TRACKS_HEADER = ["step", "track_id", "x", "y", "p_xx", "p_xy", "p_yy", "status"]
EVENTS_HEADER = ["step", "kind", "id", "x", "y"]

METRIC_FIELDS = [
    "n_components",
    "n_confirmed",
    "sum_w_components",
    "sum_w_tracks",
    "mahal_closest",
    "mahal_second",
]


@dataclass(frozen=True)
class RunManifest:
    """One experiment: a resolved scenario, its seeds, and where output goes."""

    scenario: str
    config: ScenarioConfig
    seeds: tuple[int, ...]
    out_dir: Path
    version: str = __version__

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("seed list must be non-empty")
        object.__setattr__(self, "out_dir", Path(self.out_dir))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_metrics_csv(path: Path, result: RunResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for r in result.metrics:
            writer.writerow(
                [
                    r.step,
                    r.n_components,
                    r.n_confirmed,
                    _fmt(r.sum_w_components),
                    _fmt(r.sum_w_tracks),
                    _fmt(r.mahal_closest),
                    _fmt(r.mahal_second),
                ]
            )


def write_tracks_csv(path: Path, result: RunResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACKS_HEADER)
        for snap in result.track_snapshots:
            for i in range(len(snap.ids)):
                s = snap.states[i]
                writer.writerow(
                    [
                        snap.step,
                        int(snap.ids[i]),
                        _fmt(s[0]),
                        _fmt(s[1]),
                        _fmt(s[2]),
                        _fmt(s[3]),
                        _fmt(s[4]),
                        "confirmed" if snap.confirmed[i] else "tentative",
                    ]
                )


def write_events_csv(path: Path, result: RunResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVENTS_HEADER)
        for log in result.step_logs:
            writer.writerow([log.step, "robot", 0, _fmt(log.robot[0]), _fmt(log.robot[1])])
            for j, z in enumerate(log.measurements):
                writer.writerow([log.step, "measurement", j, _fmt(z[0]), _fmt(z[1])])
            for j, x in enumerate(log.truth):
                writer.writerow([log.step, "truth", j, _fmt(x[0]), _fmt(x[1])])


def _series(result: RunResult, field: str) -> np.ndarray:
    if field == "worst_confirmed_trace":
        return result.worst_confirmed_trace
    vals = [getattr(r, field) for r in result.metrics]
    return np.array([np.nan if v is None else float(v) for v in vals])


def _seed_aggregates(result: RunResult) -> dict:
    """Run-averages per metric, over the full run and the last third."""
    out: dict = {}
    for field in METRIC_FIELDS + ["worst_confirmed_trace"]:
        series = _series(result, field)
        cut = len(series) - len(series) // 3
        with np.errstate(all="ignore"):
            out[field] = {
                "full_run": _nanmean(series),
                "last_third": _nanmean(series[cut:]),
            }
    return out


def _nanmean(arr: np.ndarray) -> float | None:
    finite = arr[np.isfinite(arr)]
    return float(np.mean(finite)) if len(finite) else None


def run_one_seed(cfg: ScenarioConfig, seed: int, seed_dir: Path, keep_logs: bool = True) -> dict:
    """Run one seed and write its CSV artifacts; returns the aggregate row."""
    cfg = dataclasses.replace(cfg, seed=seed)
    result = run_scenario(cfg, keep_logs=keep_logs)
    seed_dir.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(seed_dir / "metrics.csv", result)
    if keep_logs:
        write_tracks_csv(seed_dir / "tracks.csv", result)
        write_events_csv(seed_dir / "events.csv", result)
    return _seed_aggregates(result)


def _seed_worker(args) -> tuple[int, dict | None, str | None]:
    cfg_dict, seed, seed_dir, keep_logs = args
    try:
        cfg = config_from_dict(cfg_dict)
        return seed, run_one_seed(cfg, seed, Path(seed_dir), keep_logs), None
    except Exception:  # per-seed failures are recorded, the batch continues
        return seed, None, traceback.format_exc()


def summarize(per_seed: dict[int, dict]) -> dict:
    """Cross-seed mean/std for every metric, full-run and last-third."""
    out: dict = {}
    seeds = sorted(per_seed)
    for field in METRIC_FIELDS + ["worst_confirmed_trace"]:
        entry: dict = {}
        for window in ("full_run", "last_third"):
            vals = [per_seed[s][field][window] for s in seeds]
            clean = [v for v in vals if v is not None]
            entry[window] = {
                "mean": float(np.mean(clean)) if clean else None,
                "std": float(np.std(clean)) if clean else None,
                "per_seed": {str(s): per_seed[s][field][window] for s in seeds},
            }
        out[field] = entry
    return out


def run(manifest: RunManifest, parallel: bool = True, keep_logs: bool = True) -> int:
    """Execute every seed of a manifest; returns a process exit status.

    Per-seed artifacts land in ``<out>/seed_<k>/``; the cross-seed summary and
    the echoed manifest land at the output root. Any per-seed failure is
    recorded and the remaining seeds still run; the exit status is nonzero if
    any seed failed.
    """
    out_dir = manifest.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [
        (config_to_dict(manifest.config), seed, str(out_dir / f"seed_{seed}"), keep_logs)
        for seed in manifest.seeds
    ]
    results: dict[int, dict] = {}
    failures: dict[int, str] = {}
    if parallel and len(jobs) > 1 and os.cpu_count() and os.cpu_count() > 1:
        with ProcessPoolExecutor(max_workers=min(len(jobs), os.cpu_count())) as pool:
            for seed, agg, err in pool.map(_seed_worker, jobs):
                if err is None:
                    results[seed] = agg
                else:
                    failures[seed] = err
    else:
        for job in jobs:
            seed, agg, err = _seed_worker(job)
            if err is None:
                results[seed] = agg
            else:
                failures[seed] = err

    summary = {
        "scenario": manifest.scenario,
        "version": manifest.version,
        "seeds": list(manifest.seeds),
        "n_seeds": len(manifest.seeds),
        "clutter_rate": manifest.config.clutter_rate,
        "strategy": manifest.config.planner.strategy,
        "initial_estimate": manifest.config.initial_estimate,
        "push_enabled": manifest.config.push_enabled,
        "stationary_targets": manifest.config.targets.stationary,
        "metrics": summarize(results) if results else {},
        "failed_seeds": {str(s): failures[s] for s in sorted(failures)},
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    manifest_dict = {
        "scenario": manifest.scenario,
        "version": manifest.version,
        "seeds": list(manifest.seeds),
        "out_dir": str(out_dir),
        "config": config_to_dict(manifest.config),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest_dict, indent=2))
    (out_dir / "config.yaml").write_text(dump_config(manifest.config))
    for seed in sorted(failures):
        print(f"seed {seed} FAILED:\n{failures[seed]}", file=sys.stderr)
    return 1 if failures else 0


def _default_out_root() -> Path:
    return Path(os.environ.get("GMPHD_SAT_OUT", "runs"))


def _apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    data = config_to_dict(cfg)
    if args.clutter is not None:
        data["clutter_rate"] = args.clutter
    if args.estimate is not None:
        data["initial_estimate"] = args.estimate
    if args.strategy is not None:
        data["planner"]["strategy"] = args.strategy
    if args.no_push:
        data["push_enabled"] = False
    if args.moving_targets:
        data["targets"]["stationary"] = False
    if args.steps is not None:
        data["steps"] = args.steps
    return config_from_dict(data)


def _load_base_config(args) -> tuple[str, ScenarioConfig]:
    if args.config:
        return Path(args.config).stem, load_config(args.config)
    return "default", ScenarioConfig()


def _add_common_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML scenario config (defaults used when omitted)")
    p.add_argument("--seed", type=int, default=0, help="first seed (default 0)")
    p.add_argument("--out", help="output directory (default under $GMPHD_SAT_OUT or ./runs)")
    p.add_argument("--strategy", choices=["lawnmower", "nearest_gaussian", "largest_gaussian"])
    p.add_argument("--clutter", type=float, help="clutter rate override")
    p.add_argument("--estimate", choices=["under", "exact", "over"])
    p.add_argument("--no-push", action="store_true", help="disable the no-detection repulsion")
    p.add_argument("--moving-targets", action="store_true", help="targets move (enables GP)")
    p.add_argument("--steps", type=int, help="step-count override")
    p.add_argument("--no-logs", action="store_true", help="skip track/event CSVs (metrics only)")
    p.add_argument("--serial", action="store_true", help="run seeds sequentially")


def _make_manifest(args, name: str, cfg: ScenarioConfig, seeds, suffix: str = "") -> RunManifest:
    out = Path(args.out) if args.out else _default_out_root() / (name + suffix)
    return RunManifest(scenario=name + suffix, config=cfg, seeds=tuple(seeds), out_dir=out)


def _cmd_run(args) -> int:
    name, cfg = _load_base_config(args)
    cfg = _apply_overrides(cfg, args)
    manifest = _make_manifest(args, name, cfg, [args.seed])
    return run(manifest, parallel=False, keep_logs=not args.no_logs)


def _cmd_batch(args) -> int:
    name, cfg = _load_base_config(args)
    cfg = _apply_overrides(cfg, args)
    seeds = range(args.seed, args.seed + args.seeds)
    manifest = _make_manifest(args, name, cfg, seeds)
    return run(manifest, parallel=not args.serial, keep_logs=not args.no_logs)


def _cmd_compare(args) -> int:
    """Paired runs: push ablation, or lawnmower vs largest-Gaussian."""
    name, cfg = _load_base_config(args)
    cfg = _apply_overrides(cfg, args)
    seeds = range(args.seed, args.seed + args.seeds)
    out_root = Path(args.out) if args.out else _default_out_root() / f"{name}_compare_{args.what}"
    if args.what == "push":
        variants = {
            "with_push": dataclasses.replace(cfg, push_enabled=True),
            "without_push": dataclasses.replace(cfg, push_enabled=False),
        }
    else:
        data = config_to_dict(cfg)
        data["planner"]["strategy"] = "lawnmower"
        lawn = config_from_dict(data)
        data["planner"]["strategy"] = "largest_gaussian"
        largest = config_from_dict(data)
        variants = {"lawnmower": lawn, "largest_gaussian": largest}

    status = 0
    summaries = {}
    for label, variant_cfg in variants.items():
        manifest = RunManifest(
            scenario=f"{name}_{label}",
            config=variant_cfg,
            seeds=tuple(seeds),
            out_dir=out_root / label,
        )
        status |= run(manifest, parallel=not args.serial, keep_logs=not args.no_logs)
        summaries[label] = json.loads((out_root / label / "summary.json").read_text())
    comparison = {
        "what": args.what,
        "seeds": list(seeds),
        "variants": summaries,
    }
    (out_root / "comparison.json").write_text(json.dumps(comparison, indent=2))
    print(f"comparison written to {out_root / 'comparison.json'}")
    return status


def _cmd_table(args) -> int:
    """Assemble run summaries into a table-shaped JSON keyed by clutter rate."""
    rows = {}
    for run_dir in args.inputs:
        summary_path = Path(run_dir) / "summary.json"
        if not summary_path.exists():
            print(f"no summary.json under {run_dir}", file=sys.stderr)
            return 1
        summary = json.loads(summary_path.read_text())
        key = f"{summary['clutter_rate']:g}"
        m = summary["metrics"]
        rows[key] = {
            "number_of_components": m["n_components"]["full_run"],
            "number_of_tracks": m["n_confirmed"]["full_run"],
            "sum_of_weights_components": m["sum_w_components"]["full_run"],
            "sum_of_weights_tracks": m["sum_w_tracks"]["full_run"],
            "mahalanobis_closest": m["mahal_closest"]["full_run"],
            "mahalanobis_second_closest": m["mahal_second"]["full_run"],
        }
    table = {"by_clutter_rate": rows}
    out = Path(args.out) if args.out else Path("table.json")
    out.write_text(json.dumps(table, indent=2))
    print(f"table written to {out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gmphd-sat",
        description="GM-PHD search-and-tracking simulation harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a single scenario seed")
    _add_common_args(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_batch = sub.add_parser("batch", help="run a seed sweep")
    _add_common_args(p_batch)
    p_batch.add_argument("--seeds", type=int, default=5, help="number of seeds (default 5)")
    p_batch.set_defaults(func=_cmd_batch)

    p_cmp = sub.add_parser("compare", help="paired comparison runs")
    _add_common_args(p_cmp)
    p_cmp.add_argument("--what", choices=["push", "planner"], required=True)
    p_cmp.add_argument("--seeds", type=int, default=5)
    p_cmp.set_defaults(func=_cmd_compare)

    p_tab = sub.add_parser("table", help="aggregate run summaries into a table JSON")
    p_tab.add_argument("--in", dest="inputs", nargs="+", required=True, help="run directories")
    p_tab.add_argument("--out", help="output JSON path (default table.json)")
    p_tab.set_defaults(func=_cmd_table)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
