"""Command line entry point: ``bpinn-ageing <command> [options]``.

Every command writes into ``--out`` and records a ``manifest.json`` with the
resolved configuration hash, library versions and a digest of every file it
produced.  Exit codes: 0 success, 2 usage or configuration error, 3 I/O
error, 4 numerical divergence.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import statistics
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .ageing import lol_error
from .bayes import VariationalParams, prior_from_dict
from .bpinn import VIResult
from .config import RunConfig, desk_scale
from .data_io import ParseError, ResampleError, SchemaError, save_profile, synth_profile
from .dropout import DropoutResult
from .fem_oracle import DivergenceError, GridSpec, TemperatureField, read_grid_csv
from .metrics import crps_gaussian, nll, picp
from .network import TanhMLP, load_params, save_params
from .pinn import ConfigError, TrainingDivergence, TrainResult
from .pipeline import MODELS, Experiment, ModelRun, fem_ageing, model_ageing, predict, train_model
from .sweep import AXES, run_sweep

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DIVERGED = 0, 2, 3, 4

log = logging.getLogger("bpinn_ageing")


class UsageError(Exception):
    pass


# -- run directory helpers ---------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, cfg: RunConfig, seed, files, extra=None) -> Path:
    manifest = {
        "command": command,
        "seed": seed,
        "config_hash": cfg.hash(),
        "versions": {
            "package": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "files": {str(Path(f).relative_to(out)): _sha256(Path(f)) for f in sorted(map(str, files))},
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_config(args) -> RunConfig:
    if args.config:
        cfg = RunConfig.load(args.config)
    elif getattr(args, "desk", False):
        cfg = desk_scale()
    else:
        cfg = RunConfig()
    return cfg.with_overrides(args.set or [])


def prepare_out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_text(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


def _profile_override(args, cfg: RunConfig) -> RunConfig:
    if getattr(args, "profile", None):
        if not Path(args.profile).is_file():
            raise UsageError(f"profile file not found: {args.profile}")
        cfg = cfg.with_overrides([f"profile.source={json.dumps(str(args.profile))}"])
    elif cfg.profile.source != "synthetic" and not Path(cfg.profile.source).is_file():
        raise UsageError(f"profile file not found: {cfg.profile.source}")
    return cfg


# -- checkpoints ---------------------------------------------------------------


def save_checkpoint(out: Path, run: ModelRun, cfg: RunConfig) -> Path:
    path = out / "checkpoint.txt"
    head = {"model": run.model, "seed": run.seed, "config_hash": cfg.hash(), "hidden": list(run.net.shape.hidden)}
    if run.model == "bpinn":
        head["prior"] = run.result.prior.to_dict()
        run.result.vp.save(path, head)
    else:
        if run.model == "dropout":
            head["rate"] = run.result.rate
        save_params(path, run.net.shape, run.result.theta, seed=run.seed, extra=head)
    return path


def load_run(run_dir: Path) -> tuple[RunConfig, ModelRun]:
    cfg_path, ck = run_dir / "config.yaml", run_dir / "checkpoint.txt"
    if not (cfg_path.is_file() and ck.is_file()):
        raise UsageError(f"{run_dir} is not a training run directory (config.yaml, checkpoint.txt)")
    cfg = RunConfig.load(cfg_path)
    with open(ck, encoding="utf-8") as fh:
        head = json.loads(fh.readline())
    model = head.get("model")
    if model == "bpinn":
        vp, head = VariationalParams.load(ck)
        net = TanhMLP(head["hidden"])
        res = VIResult(vp, [], prior_from_dict(head["prior"]), head["seed"])
    elif model in ("pinn", "dropout"):
        shape, theta, head = load_params(ck)
        net = TanhMLP(shape)
        if model == "dropout":
            res = DropoutResult(theta, [], head["seed"], rate=head["rate"])
        else:
            res = TrainResult(theta, [], head["seed"])
    else:
        raise UsageError(f"{ck}: unknown model {model!r}")
    return cfg, ModelRun(model, net, res, head["seed"])


# -- commands ------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = load_config(args)
    out = prepare_out(args)
    p = cfg.profile
    prof = synth_profile(args.days or p.days, args.interval or p.interval, args.seed)
    path = out / "profile.csv"
    save_profile(prof, path)
    _write_text(out / "config.yaml", cfg.to_yaml())
    write_manifest(out, "synth", cfg, args.seed, [path, out / "config.yaml"])
    print(f"wrote {len(prof)} samples to {path}")
    return EXIT_OK


def cmd_fem(args) -> int:
    cfg = _profile_override(args, load_config(args))
    if args.grid:
        g = GridSpec.parse(args.grid)
        cfg = cfg.with_overrides([f"grid.nx={g.nx}", f"grid.nt={g.nt}"])
    out = prepare_out(args)
    exp = Experiment.from_config(cfg)
    field = exp.fem()
    files = [out / "temperature.csv", out / "temperature_c.csv", out / "config.yaml"]
    field.to_csv(files[0])
    field.to_celsius().to_csv(files[1])
    _write_text(files[2], cfg.to_yaml())
    norm = exp.norm.to_dict()
    _write_text(out / "normalization.json", json.dumps(norm, indent=2, sort_keys=True) + "\n")
    files.append(out / "normalization.json")
    write_manifest(out, "fem", cfg, args.seed, files, {"grid": str(field.grid)})
    print(f"FEM field {field.grid} written to {files[0]}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _profile_override(args, load_config(args))
    out = prepare_out(args)
    exp = Experiment.from_config(cfg)
    log_path = out / "log.jsonl"
    with open(log_path, "w", encoding="utf-8") as fh:
        def cb(rec):
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            log.info("epoch %s: %s", rec["epoch"], rec)

        run = train_model(exp, args.model, args.seed, callback=cb if args.model != "dropout" else None)
        if args.model == "dropout":
            fh.write(run.result.history_jsonl())
    files = [log_path, save_checkpoint(out, run, cfg), _write_text(out / "config.yaml", cfg.to_yaml())]
    extra = {"model": args.model}
    if args.model == "dropout" and run.result.degenerate:
        extra["flag"] = "degenerate: loss did not decrease"
        log.warning("dropout run is degenerate: loss did not decrease")
    if args.predict:
        pred = predict(exp, run, cfg.grid_spec(), args.seed)
        files += list(pred.to_csv(out / "prediction").values())
    write_manifest(out, "train", cfg, args.seed, files, extra)
    print(f"trained {args.model}; checkpoint in {out / 'checkpoint.txt'}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _profile_override(args, load_config(args))
    axis = args.axis or cfg.sweep.axis
    values = args.values if args.values is not None else cfg.sweep.values
    if not values:
        raise UsageError("sweep axis has no values")
    if axis not in AXES:
        raise UsageError(f"unknown axis {axis!r}; choose from {AXES}")
    if axis != "prior":
        values = [float(v) if axis in ("noise", "dropout_rate") else int(v) for v in values]
    seeds = args.seeds if args.seeds else cfg.sweep.seeds
    out = prepare_out(args)
    res = run_sweep(cfg, axis, values, seeds, workers=args.workers or cfg.sweep.workers)
    rep = res.report()
    files = [_write_text(out / "report.txt", rep.to_table()), _write_text(out / "report.jsonl", rep.to_jsonl())]
    tidy = out / "cells.csv"
    with open(tidy, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["axis", "value", "seed", "metric", "result"])
        w.writeheader()
        w.writerows(res.tidy_rows())
    files += [tidy, _write_text(out / "config.yaml", cfg.to_yaml())]
    extra = {"axis": axis, "failed_cells": len(res.failures())}
    if axis == "noise" and rep.rows:
        trend = res.degradation_trend()
        extra["degradation_trend"] = trend
        print(f"degradation trend: {json.dumps({k: v for k, v in trend.items() if k != 'medians'})}")
    write_manifest(out, "sweep", cfg, seeds, files, extra)
    sys.stdout.write(rep.to_table())
    return EXIT_OK


def cmd_ageing(args) -> int:
    if not args.fem and not args.run:
        raise UsageError("give --fem FIELD.csv, --run RUN_DIR or both")
    out = prepare_out(args)
    files, summary = [], {}
    ref = None
    cfg = None
    if args.run:
        cfg, run = load_run(Path(args.run))
    if args.fem:
        fem_dir = Path(args.fem)
        fem_cfg = RunConfig.load(fem_dir / "config.yaml") if (fem_dir / "config.yaml").is_file() else None
        cfg = cfg or fem_cfg or load_config(args)
        exp = Experiment.from_config(cfg)
        grid, values = read_grid_csv(fem_dir / "temperature.csv" if fem_dir.is_dir() else fem_dir)
        field = TemperatureField(grid, values, "normalized", exp.norm)
        ref = fem_ageing(exp, field)
        files += list(ref.to_csv(out / "fem").values())
        summary["fem"] = ref.summary()
    if args.run:
        exp = Experiment.from_config(cfg)
        grid = ref.grid if ref is not None else cfg.grid_spec()
        age = model_ageing(exp, run, grid, args.seed)
        files += list(age.to_csv(out / run.model).values())
        summary[run.model] = age.summary()
        if ref is not None:
            summary["error_vs_fem"] = lol_error(age, ref)
    path = _write_text(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    write_manifest(out, "ageing", cfg or RunConfig(), args.seed, files + [path])
    for k, v in summary.items():
        if k == "error_vs_fem":
            print(f"worst-case LOL error: {v['worst_abs_error_min']:.3f} min ({v['worst_rel_error_pct']:.2f}%)")
        else:
            print(f"{k}: max LOL {v['max_lol_min']:.3f} min, std {v['max_lol_std_min']:.3f} min")
    return EXIT_OK


def cmd_score(args) -> int:
    pred_dir = Path(args.pred)
    grids = {}
    for name in ("mean", "std", "lower", "upper"):
        p = pred_dir / f"{name}.csv"
        if not p.is_file():
            raise UsageError(f"missing prediction grid {p}")
        grids[name] = read_grid_csv(p)[1]
    _, ref = read_grid_csv(args.reference)
    if ref.shape != grids["mean"].shape:
        raise UsageError("reference and prediction grids differ")
    std = np.maximum(grids["std"], 1e-6)
    result = {
        "PICP": picp(grids["lower"], grids["upper"], ref),
        "CRPS": float(np.mean(crps_gaussian(grids["mean"], std, ref))),
        "NLL": nll(grids["mean"], grids["std"], ref),
        "interval": "central 95% (mean -/+ 1.96 std)",
        "crps_estimator": "Gaussian closed form from mean/std grids",
    }
    out = prepare_out(args)
    path = _write_text(out / "scores.json", json.dumps(result, indent=2, sort_keys=True) + "\n")
    write_manifest(out, "score", RunConfig(), None, [path])
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _profile_override(args, load_config(args))
    out = prepare_out(args)
    reps = args.repeats or cfg.bench.repeats
    grid = GridSpec(cfg.bench.eval_nx, cfg.bench.eval_nt)
    exp = Experiment.from_config(cfg)
    rows = {}
    fem_times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        exp.fem(GridSpec(grid.nx, grid.nt))
        fem_times.append(time.perf_counter() - t0)
    rows["FEM"] = {"total": fem_times}
    for model in ("pinn", "dropout", "bpinn"):
        tt, te = [], []
        for r in range(reps):
            run = train_model(exp, model, args.seed + r)
            tt.append(run.train_seconds)
            t0 = time.perf_counter()
            predict(exp, run, grid, args.seed, keep_samples=False)
            te.append(time.perf_counter() - t0)
        rows[model] = {"train": tt, "eval": te}

    def ms(v):
        return (statistics.fmean(v), statistics.pstdev(v))

    lines = [f"evaluation grid {grid} ({grid.size} points), {reps} repeat(s)"]
    lines.append(f"{'model':<8}  {'train [s]':>18}  {'evaluation [s]':>18}")
    for name, r in rows.items():
        if "total" in r:
            m, s = ms(r["total"])
            lines.append(f"{name:<8}  {'':>18}  {m:9.3f} ± {s:6.3f}   (combined)")
        else:
            (m1, s1), (m2, s2) = ms(r["train"]), ms(r["eval"])
            lines.append(f"{name:<8}  {m1:9.3f} ± {s1:6.3f}  {m2:9.3f} ± {s2:6.3f}")
    text = "\n".join(lines) + "\n"
    files = [_write_text(out / "bench.txt", text), _write_text(out / "bench.json", json.dumps(rows, indent=2) + "\n")]
    write_manifest(out, "bench", cfg, args.seed, files)
    sys.stdout.write(text)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bpinn-ageing", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, profile=True):
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--desk", action="store_true", help="start from the desk-scale preset instead of the defaults")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="run", help="output directory")
        if profile:
            p.add_argument("--profile", help="profile CSV (overrides profile.source)")

    p = sub.add_parser("synth", help="write a synthetic load/temperature profile")
    common(p, profile=False)
    p.add_argument("--days", type=float)
    p.add_argument("--interval", type=float, help="sampling interval in seconds")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fem", help="solve the reference oil-temperature field")
    common(p)
    p.add_argument("--grid", help="NXxNT, e.g. 81x5761")
    p.set_defaults(func=cmd_fem)

    p = sub.add_parser("train", help="train a pinn, dropout or bpinn model")
    common(p)
    p.add_argument("--model", choices=MODELS, required=True)
    p.add_argument("--predict", action="store_true", help="also write predictive grids")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="multi-seed sweep along one axis")
    common(p)
    p.add_argument("--axis", choices=AXES)
    p.add_argument("--values", nargs="*")
    p.add_argument("--seeds", nargs="*", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ageing", help="hot-spot and loss-of-life fields")
    common(p, profile=False)
    p.add_argument("--fem", help="FEM run directory or temperature.csv")
    p.add_argument("--run", help="training run directory")
    p.set_defaults(func=cmd_ageing)

    p = sub.add_parser("score", help="score predictive grids against a reference field")
    p.add_argument("--pred", required=True, help="directory with mean/std/lower/upper CSVs")
    p.add_argument("--reference", required=True, help="reference field CSV")
    p.add_argument("--out", default="run")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("bench", help="time training and evaluation")
    common(p)
    p.add_argument("--repeats", type=int)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, SchemaError, ResampleError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDivergence, DivergenceError) as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
