"""Command-line driver: growth analysis, parameter sweeps, oracles, rankings.

Every command writes RFC-4180 CSV data files plus a JSON run manifest
that snapshots the full configuration, the seed, and a content hash of
the input data.  Re-running a command with ``--config <manifest.json>``
reproduces byte-identical CSV bodies.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import _svg, __version__
from .dataset import Dataset, load_cifar10, load_raw, sidecar_path
from .errors import BridgeError, ConfigError, DataFormatError, IntegrationError
from .growth import GrowthConfig, growth_report
from .oracle import mc_frequencies, toy2d, write_toy2d_csv
from .schedule import GRID_KINDS, Schedule
from .score import provider_from_spec
from .stats import rank_topk, welch_ttest

DEFAULT_CONFIG = {
    "schedule.beta_min": 0.1,
    "schedule.beta_max": 20.0,
    "schedule.t_eps": 1e-3,
    "schedule.t_max": 1.0,
    "schedule.num_steps": 1000,
    "schedule.grid_kind": "uniform_t",
    "growth.num_axes": 100,
    "growth.sigma": 0.05,
    "growth.steps": None,
    "growth.method": "euler",
    "oracle.num_draws": 10000,
    "oracle.assign": "nearest",
    "oracle.radius": None,
    "stats.alpha": 0.5,
    "stats.n_neighbors": 50,
    "dataset.value_range": [-1.0, 1.0],
}

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def load_config(path) -> dict:
    """Read a flat dotted-key JSON config, or the config inside a manifest."""
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if isinstance(raw, dict) and raw.get("tool") == "memometer" and "config" in raw:
        cfg = dict(raw["config"])
        if "seed" in raw:
            cfg.setdefault("_manifest_seed", raw["seed"])
        raw = cfg
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    merged = dict(DEFAULT_CONFIG)
    for key, value in raw.items():
        if key == "_manifest_seed":
            merged[key] = value
            continue
        if key not in DEFAULT_CONFIG:
            raise ConfigError(f"{path}: unknown config key {key!r}")
        merged[key] = value
    return merged


def schedule_from_config(cfg: dict) -> Schedule:
    try:
        return Schedule(
            beta_min=float(cfg["schedule.beta_min"]),
            beta_max=float(cfg["schedule.beta_max"]),
            t_eps=float(cfg["schedule.t_eps"]),
            t_max=float(cfg["schedule.t_max"]),
            num_steps=int(cfg["schedule.num_steps"]),
            grid_kind=str(cfg["schedule.grid_kind"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def growth_from_config(cfg: dict, seed: int, cheap: bool = False) -> GrowthConfig:
    steps = cfg["growth.steps"]
    try:
        gc = GrowthConfig(
            num_axes=1 if cheap else int(cfg["growth.num_axes"]),
            sphere_radius=float(cfg["growth.sigma"]),
            steps=1 if cheap else (None if steps is None else int(steps)),
            seed=seed,
            method=str(cfg["growth.method"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return gc


def load_data(paths, cfg: dict) -> Dataset:
    """Load one dataset from CIFAR batch files (.bin) or a raw blob (.f32)."""
    paths = [Path(p) for p in paths]
    for p in paths:
        if not p.exists():
            raise DataFormatError(f"dataset path does not exist: {p}")
    value_range = tuple(cfg["dataset.value_range"])
    if all(p.suffix == ".bin" for p in paths):
        return load_cifar10(paths, value_range=value_range)
    if len(paths) == 1 and paths[0].suffix in (".f32", ".raw"):
        return load_raw(paths[0], sidecar_path(paths[0]))
    raise DataFormatError(
        "expected CIFAR .bin batch files or a single .f32 blob with a JSON sidecar"
    )


def write_manifest(out_dir: Path, command: str, cfg: dict, seed: int,
                   fingerprints: dict, outputs: list[str], elapsed: float) -> Path:
    manifest = {
        "tool": "memometer",
        "version": __version__,
        "command": command,
        "seed": seed,
        "config": {k: v for k, v in cfg.items() if not k.startswith("_")},
        "dataset_fingerprint": fingerprints,
        "outputs": outputs,
        "timing_s": round(elapsed, 3),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1) + "\n")
    return path


def _csv_writer(fh):
    return csv.writer(fh, lineterminator="\r\n")


def _fmt(x: float) -> str:
    return repr(float(x))


def _checkpoints(arg: str | None, limit: int) -> list[int]:
    if arg:
        try:
            steps = sorted({int(s) for s in arg.split(",")})
        except ValueError as exc:
            raise ConfigError(f"bad checkpoint list {arg!r}") from exc
        if any(not 1 <= s <= limit for s in steps):
            raise ConfigError(f"checkpoints must lie in [1, {limit}]")
        return steps
    return sorted({s for s in (1, 10, 100, limit) if s <= limit})


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_analyze(args) -> int:
    t0 = time.monotonic()
    cfg = load_config(args.config) if args.config else dict(DEFAULT_CONFIG)
    seed = args.seed if args.seed is not None else int(cfg.get("_manifest_seed", 0))
    schedule = schedule_from_config(cfg)
    gcfg = growth_from_config(cfg, seed, cheap=args.cheap)
    ds = load_data(args.data, cfg)
    score_ds = load_data(args.score_data, cfg) if args.score_data else ds
    if gcfg.num_axes > ds.dim:
        gcfg = dataclasses.replace(gcfg, num_axes=ds.dim)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    provider = provider_from_spec(args.provider, score_ds, schedule)
    try:
        series, failures = growth_report(ds, provider, schedule, gcfg)
    finally:
        if hasattr(provider, "close"):
            provider.close()
    if not series:
        raise IntegrationError("growth failed for every sample")

    total_steps = len(series[0].log_l)
    steps = _checkpoints(args.checkpoints, total_steps)
    if args.full_series:
        steps = list(range(1, total_steps + 1))
    by_id = {s.target_id: s for s in series}

    csv_path = out_dir / "growth.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = _csv_writer(fh)
        writer.writerow(["id"] + [f"log_l_{s}" for s in steps])
        for sample_id in ds.ids:
            if sample_id not in by_id:
                continue
            s = by_id[sample_id]
            writer.writerow([sample_id] + [_fmt(s.at_step(st)) for st in steps])
    outputs = ["growth.csv"]

    if failures:
        with open(out_dir / "failures.csv", "w", newline="") as fh:
            writer = _csv_writer(fh)
            writer.writerow(["id", "error"])
            writer.writerows(failures)
        outputs.append("failures.csv")

    if args.svg:
        finals = [s.final for s in series]
        counts, edges = np.histogram(finals, bins=min(30, max(3, len(finals) // 4)))
        _svg.histogram(out_dir / "growth_hist.svg", edges, counts,
                       "log volume growth", "log_l at final step")
        outputs.append("growth_hist.svg")

    write_manifest(out_dir, "analyze", cfg, seed,
                   {"data": ds.fingerprint(),
                    **({"score_data": score_ds.fingerprint()} if args.score_data else {})},
                   outputs, time.monotonic() - t0)
    print(f"analyzed {len(series)} samples ({len(failures)} failures) -> {csv_path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    t0 = time.monotonic()
    cfg = load_config(args.config) if args.config else dict(DEFAULT_CONFIG)
    seed = args.seed if args.seed is not None else int(cfg.get("_manifest_seed", 0))
    schedule = schedule_from_config(cfg)
    ds_a = load_data(args.data_a, cfg)
    ds_b = load_data(args.data_b, cfg)
    if ds_a.dim != ds_b.dim:
        raise DataFormatError("cohorts must share the data dimension")

    axes = sorted({min(int(n), ds_a.dim) for n in args.axes.split(",")})
    sigmas = sorted({float(s) for s in args.sigmas.split(",")})
    total_steps = int(cfg["schedule.num_steps"])
    steps = _checkpoints(args.steps, total_steps)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    provider = provider_from_spec(args.provider, ds_a, schedule)

    rows = []
    try:
        for sigma in sigmas:
            for n_axes in axes:
                gcfg = GrowthConfig(num_axes=n_axes, sphere_radius=sigma,
                                    steps=None, seed=seed,
                                    method=str(cfg["growth.method"]))
                series_a, _ = growth_report(ds_a, provider, schedule, gcfg)
                series_b, _ = growth_report(ds_b, provider, schedule, gcfg)
                for step in steps:
                    vals_a = [s.at_step(step) for s in series_a]
                    vals_b = [s.at_step(step) for s in series_b]
                    res = welch_ttest(vals_a, vals_b)
                    rows.append((n_axes, sigma, step, res.p_value,
                                 res.mean_a, res.mean_b))
    finally:
        if hasattr(provider, "close"):
            provider.close()

    csv_path = out_dir / "sweep.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = _csv_writer(fh)
        writer.writerow(["n_axes", "sigma", "step", "p_value", "mean_a", "mean_b"])
        for n_axes, sigma, step, p, ma, mb in rows:
            writer.writerow([n_axes, _fmt(sigma), step, _fmt(p), _fmt(ma), _fmt(mb)])
    outputs = ["sweep.csv"]

    if args.svg:
        series = {}
        for n_axes in axes:
            pts = [(step, p) for na, sg, step, p, _, _ in rows
                   if na == n_axes and sg == sigmas[0]]
            if pts:
                series[f"N={n_axes}"] = ([s for s, _ in pts], [p for _, p in pts])
        _svg.line_chart(out_dir / "sweep_p.svg", series,
                        f"cohort separation p-values (sigma={sigmas[0]})",
                        "step", "p", log_y=True)
        outputs.append("sweep_p.svg")

    write_manifest(out_dir, "sweep", cfg, seed,
                   {"data_a": ds_a.fingerprint(), "data_b": ds_b.fingerprint()},
                   outputs, time.monotonic() - t0)
    print(f"swept {len(axes)} axis counts x {len(sigmas)} radii -> {csv_path}")
    return EXIT_OK


def cmd_toy2d(args) -> int:
    t0 = time.monotonic()
    cfg = load_config(args.config) if args.config else dict(DEFAULT_CONFIG)
    seed = args.seed if args.seed is not None else int(cfg.get("_manifest_seed", 0))
    schedule = schedule_from_config(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    result = toy2d(args.samples, schedule, ring_points=args.ring_points,
                   sigma_ring=args.sigma_ring, method=str(cfg["growth.method"]),
                   record_stride=args.stride)
    csv_path = out_dir / "toy2d.csv"
    write_toy2d_csv(result, csv_path)
    report = {
        "num_samples": args.samples,
        "disjoint": result.disjoint,
        "min_hull_gap": result.min_hull_gap,
    }
    (out_dir / "toy2d_report.json").write_text(json.dumps(report, indent=1) + "\n")
    write_manifest(out_dir, "toy2d", cfg, seed, {}, ["toy2d.csv", "toy2d_report.json"],
                   time.monotonic() - t0)
    print(f"toy2d samples={args.samples}: disjoint={result.disjoint} "
          f"min_gap={result.min_hull_gap:.4g} -> {csv_path}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    t0 = time.monotonic()
    cfg = load_config(args.config) if args.config else dict(DEFAULT_CONFIG)
    seed = args.seed if args.seed is not None else int(cfg.get("_manifest_seed", 0))
    schedule = schedule_from_config(cfg)
    ds = load_data(args.data, cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    draws = args.draws if args.draws else int(cfg["oracle.num_draws"])
    assign = args.assign or str(cfg["oracle.assign"])
    radius = args.radius if args.radius is not None else cfg["oracle.radius"]
    provider = provider_from_spec(args.provider, ds, schedule)
    try:
        report = mc_frequencies(ds, provider, schedule, draws, seed=seed,
                                assign=assign,
                                radius=None if radius is None else float(radius),
                                method=str(cfg["growth.method"]))
    finally:
        if hasattr(provider, "close"):
            provider.close()

    csv_path = out_dir / "frequencies.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = _csv_writer(fh)
        writer.writerow(["id", "frequency", "std_error"])
        for sample_id in ds.ids:
            writer.writerow([sample_id, _fmt(report.frequencies[sample_id]),
                             _fmt(report.std_errors[sample_id])])
    summary = {
        "num_draws": report.num_draws,
        "unassigned": report.unassigned,
        "failed_draws": report.failed_draws,
        "roundtrip_errors": report.roundtrip_errors,
    }
    (out_dir / "oracle_report.json").write_text(json.dumps(summary, indent=1) + "\n")
    write_manifest(out_dir, "oracle", cfg, seed, {"data": ds.fingerprint()},
                   ["frequencies.csv", "oracle_report.json"], time.monotonic() - t0)
    print(f"oracle: {draws} draws, unassigned={report.unassigned:.4f} -> {csv_path}")
    return EXIT_OK


def cmd_rank(args) -> int:
    t0 = time.monotonic()
    path = Path(args.growth_csv)
    if not path.exists():
        raise DataFormatError(f"growth CSV does not exist: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        col = f"log_l_{args.at_step}"
        if col not in header:
            raise DataFormatError(f"{path}: no column {col!r}; have {header[1:]}")
        idx = header.index(col)
        pairs = [(row[0], float(row[idx])) for row in reader if row]
    ordered = sorted(pairs, key=lambda kv: (-kv[1], kv[0]))
    if not 1 <= args.k <= len(ordered):
        raise ConfigError(f"k must be in [1, {len(ordered)}]")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "top_ids.txt").write_text(
        "\n".join(i for i, _ in ordered[:args.k]) + "\n")
    (out_dir / "bottom_ids.txt").write_text(
        "\n".join(i for i, _ in ordered[-args.k:]) + "\n")
    write_manifest(out_dir, "rank", dict(DEFAULT_CONFIG), 0, {},
                   ["top_ids.txt", "bottom_ids.txt"], time.monotonic() - t0)
    print(f"ranked {len(ordered)} ids at step {args.at_step} -> {out_dir}")
    return EXIT_OK


def _read_values(path) -> list[float]:
    p = Path(path)
    if not p.exists():
        raise DataFormatError(f"value file does not exist: {p}")
    values = []
    for token in p.read_text().replace(",", " ").split():
        try:
            values.append(float(token))
        except ValueError as exc:
            raise DataFormatError(f"{p}: non-numeric token {token!r}") from exc
    return values


def cmd_ttest(args) -> int:
    a = _read_values(args.a)
    b = _read_values(args.b)
    try:
        res = welch_ttest(a, b, equal_var=args.equal_var)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    payload = dataclasses.asdict(res)
    text = json.dumps(payload, indent=1)
    print(text)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "ttest.json").write_text(text + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memometer",
        description="Quantify how easily training samples are reproduced by a "
                    "diffusion-style generative flow.",
    )
    parser.add_argument("--version", action="version", version=f"memometer {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", help="JSON config (flat dotted keys) or a prior manifest")
        p.add_argument("--seed", type=int, default=None)
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("analyze", help="per-sample log volume growth")
    common(p)
    p.add_argument("--data", nargs="+", required=True,
                   help="CIFAR .bin batches or one .f32 blob (JSON sidecar)")
    p.add_argument("--score-data", nargs="+",
                   help="mixture source for the exact score (defaults to --data)")
    p.add_argument("--provider", default="exact",
                   help="exact | bridge:stdio:<command> | bridge:tcp:<host:port>")
    p.add_argument("--cheap", action="store_true", help="single axis, single step")
    p.add_argument("--checkpoints", help="comma-separated step numbers for CSV columns")
    p.add_argument("--full-series", action="store_true")
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="axis-count x radius grid of cohort p-values")
    common(p)
    p.add_argument("--data-a", nargs="+", required=True, help="cohort A (mixture source)")
    p.add_argument("--data-b", nargs="+", required=True, help="cohort B")
    p.add_argument("--provider", default="exact")
    p.add_argument("--axes", default="1,10,50,100")
    p.add_argument("--sigmas", default="0.001,0.01,0.05,0.1")
    p.add_argument("--steps", help="checkpoint steps (default 1,10,100,T)")
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("toy2d", help="ring transport around 2/3/5 planar samples")
    common(p)
    p.add_argument("--samples", type=int, choices=(2, 3, 5), default=5)
    p.add_argument("--ring-points", type=int, default=64)
    p.add_argument("--sigma-ring", type=float, default=0.05)
    p.add_argument("--stride", type=int, default=50)
    p.set_defaults(func=cmd_toy2d)

    p = sub.add_parser("oracle", help="Monte-Carlo generation frequencies")
    common(p)
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--provider", default="exact")
    p.add_argument("--draws", type=int)
    p.add_argument("--assign", choices=("nearest", "radius"))
    p.add_argument("--radius", type=float)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("rank", help="top/bottom ids from a growth CSV")
    common(p)
    p.add_argument("--growth-csv", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--at-step", type=int, default=1)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("ttest", help="Welch t-test on two value files")
    common(p, needs_out=False)
    p.add_argument("--out")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--equal-var", action="store_true")
    p.set_defaults(func=cmd_ttest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (IntegrationError, BridgeError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
