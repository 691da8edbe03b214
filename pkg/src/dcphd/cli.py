"""Command-line front end: ``dcphd run | bench | validate``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import subprocess
import sys
import tempfile
from dataclasses import replace
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np

from .config import BACKENDS, FILTER_KINDS, ConfigError, ScenarioConfig, load_config
from .metrics import RunStats, aggregate
from .sim import generate_truth, measurement_rows, run_experiment, truth_rows

EXIT_CONFIG = 2


def fmt(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"refusing to serialize non-finite value {x!r}")
    return format(x, ".17g")


def artifact_version() -> str:
    try:
        version = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        version = "0+unknown"
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            version += f"+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return version


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def flag_overrides(args) -> list[str]:
    """Translate dedicated flags into ``key=value`` overrides (applied after --set)."""
    out = list(args.set or [])
    for flag, key in [("seed", "experiment.seed"), ("filter", "filter.kind"), ("groups", "filter.groups"),
                      ("exchange", "filter.exchange"), ("clutter", "clutter.rate"), ("runs", "experiment.runs"),
                      ("backend", "filter.backend")]:
        value = getattr(args, flag, None)
        if value is not None:
            out.append(f"{key}={value}")
    return out


def manifest(config: ScenarioConfig, started: str) -> dict:
    fc = config.filter
    return {
        "config_digest": config.digest(),
        "seed": config.seed,
        "filter": fc.kind,
        "K": fc.groups if fc.kind == "dcp" else 1,
        "M": fc.per_group_particles if fc.kind == "dcp" else fc.particles,
        "L": fc.exchange if fc.kind == "dcp" else 0,
        "R_k": fc.particles_per_target if fc.kind == "dcp" else fc.groups * fc.particles_per_target,
        "total_particles": fc.particles,
        "version": artifact_version(),
        "started": started,
        "finished": _now(),
    }


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def per_scan_csv(runs: list[RunStats]) -> str:
    rows = ((i, k, t, e, float(o))
            for i, r in enumerate(runs) for k, (t, e, o) in enumerate(zip(r.true_n, r.est_n, r.ospa)))
    return _csv_text(["run", "scan", "true_n", "est_n", "ospa"], rows)


def estimates_csv(runs: list[RunStats]) -> str:
    rows = ((i, k, label, float(x), float(y))
            for i, r in enumerate(runs) for k, ests in enumerate(r.estimates) for label, x, y in ests)
    return _csv_text(["run", "scan", "label", "x", "y"], rows)


def write_outputs(out_dir: Path, files: dict[str, str]) -> None:
    """Write all files or none: stage in a temp dir, then move into place."""
    out_dir.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory(dir=out_dir, prefix=".staging-") as tmp:
        for name, text in files.items():
            Path(tmp, name).write_text(text)
        for name in files:
            os.replace(Path(tmp, name), out_dir / name)


def cmd_run(args) -> int:
    config = load_config(args.config, flag_overrides(args))
    started = _now()
    runs = run_experiment(config)
    summary = {"manifest": manifest(config, started), "clutter_rate": config.clutter_rate,
               "scan_count": config.scan_count, **aggregate(runs),
               "per_run_mean_ospa": [r.mean_ospa for r in runs]}
    files = {
        "per_scan.csv": per_scan_csv(runs),
        "estimates.csv": estimates_csv(runs),
        "truth.csv": _csv_text(["scan", "track", "x", "vx", "y", "vy"], truth_rows(generate_truth(config))),
        "measurements.csv": _csv_text(["run", "scan", "label", "range", "bearing"], measurement_rows(config)),
        "summary.json": json.dumps(summary, indent=2, allow_nan=False) + "\n",
    }
    write_outputs(Path(args.out), files)
    print(f"{config.filter.kind}: {len(runs)} run(s), mean OSPA {summary['mean_ospa']:.4f} "
          f"(std {summary['std_ospa']:.4f}), mean filter time {summary['mean_time']:.3f} s -> {args.out}")
    return 0


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def bench_table(config: ScenarioConfig, groups: list[int], repeats: int, rates: list[float],
                backend: str) -> list[dict]:
    """Time the serial filter against K-group ensembles at equal total particles.

    For every clutter rate: one ``PHD`` row (serial, all particles), one
    ``DCPPHD`` row per K, and one ``partPHD`` row per K > 1 (serial filter
    holding only one group's share).  Speedups divide the serial median
    filter time by the row's median filter time.
    """
    rows = []
    base = config.filter
    for rate in rates:
        cfg = replace(config, models=replace(config.models, clutter=replace(config.models.clutter, rate=rate)))
        variants = [("PHD", 1, replace(base, kind="serial", groups=1,
                                        particles_per_target=base.groups * base.particles_per_target))]
        for K in groups:
            if base.particles % K:
                raise ConfigError(f"{base.particles} particles do not split into {K} groups", key="--groups")
            M = base.particles // K
            R = max(base.groups * base.particles_per_target // K, 1)
            L = min(base.exchange * base.groups // K, (M - 1) // 2)
            variants.append(("DCPPHD", K, replace(base, kind="dcp", groups=K, particles_per_target=R,
                                                   exchange=L, backend=backend)))
            if K > 1:
                variants.append(("partPHD", K, replace(base, kind="serial", groups=1, particles=M,
                                                        particles_per_target=R)))
        serial_median = None
        for method, K, fc in variants:
            stats = aggregate(run_experiment(cfg, fc, repeats))
            if serial_median is None:
                serial_median = stats["median_time"]
            rows.append({"method": method, "groups": K, "total_particles": fc.particles,
                         "mean_time": stats["mean_time"], "median_time": stats["median_time"],
                         "mean_ospa": stats["mean_ospa"], "std_ospa": stats["std_ospa"], "r": rate,
                         "speedup": serial_median / stats["median_time"]})
    return rows


BENCH_COLUMNS = ["method", "groups", "total_particles", "mean_time", "median_time", "mean_ospa", "std_ospa",
                 "r", "speedup"]


def cmd_bench(args) -> int:
    config = load_config(args.config, flag_overrides(args))
    rows = bench_table(config, _int_list(args.groups_list), args.repeats, _float_list(args.rates),
                       args.backend or "process")
    text = _csv_text(BENCH_COLUMNS, ([row[c] for c in BENCH_COLUMNS] for row in rows))
    write_outputs(Path(args.out), {"bench.csv": text})
    print(f"{'method':<8} {'K':>2} {'N':>6} {'median s':>9} {'OSPA':>8} {'std':>8} {'r':>5} {'speedup':>7}")
    for row in rows:
        print(f"{row['method']:<8} {row['groups']:>2} {row['total_particles']:>6} {row['median_time']:>9.3f} "
              f"{row['mean_ospa']:>8.4f} {row['std_ospa']:>8.4f} {row['r']:>5g} {row['speedup']:>7.2f}")
    return 0


def cmd_validate(args) -> int:
    config = load_config(args.config, flag_overrides(args))
    fc = config.filter
    print(f"ok: {len(config.tracks)} tracks over {config.scan_count} scans; {fc.kind} filter, "
          f"N={fc.particles}, K={fc.groups}, L={fc.exchange}, clutter rate {config.clutter_rate:g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcphd", description="Serial and distributed particle PHD tracking")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="scenario YAML (default: built-in five-track scenario)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
        p.add_argument("--seed", type=int)
        p.add_argument("--clutter", type=float, help="mean clutter count per scan")
        p.add_argument("--exchange", type=int, help="particles exchanged per ring hop (L)")
        p.add_argument("--backend", choices=BACKENDS)

    run = sub.add_parser("run", help="run Monte-Carlo tracking experiments")
    common(run)
    run.add_argument("--out", default="results")
    run.add_argument("--filter", choices=FILTER_KINDS)
    run.add_argument("--groups", type=int, help="number of particle groups (K)")
    run.add_argument("--runs", type=int)
    run.set_defaults(func=cmd_run)

    bench = sub.add_parser("bench", help="time serial vs distributed filters at equal particle budgets")
    common(bench)
    bench.add_argument("--out", default="results")
    bench.add_argument("--groups", dest="groups_list", default="1,4", help="comma-separated K values")
    bench.add_argument("--repeats", type=int, default=5)
    bench.add_argument("--rates", default="0,10,20", help="comma-separated clutter rates")
    bench.set_defaults(func=cmd_bench)

    val = sub.add_parser("validate", help="check a config without running it")
    common(val)
    val.add_argument("--filter", choices=FILTER_KINDS)
    val.add_argument("--groups", type=int)
    val.add_argument("--runs", type=int)
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
