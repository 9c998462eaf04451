"""Seeded hyper-parameter sweeps with per-cell failure isolation."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .config import RunConfig
from .fem_oracle import GridSpec
from .metrics import MetricsReport, metrics_report
from .pipeline import Experiment, evaluate_run, train_model

log = logging.getLogger(__name__)

AXES = ("neurons", "samples", "noise", "dropout_rate", "prior")


def apply_axis(cfg: RunConfig, axis: str, value) -> tuple[RunConfig, str]:
    """Config for one sweep cell and the model the axis implies."""
    model = cfg.sweep.model
    if axis == "neurons":
        w = int(value)
        over = [f"training.hidden=[{w}, {w}]"]
    elif axis == "samples":
        over = [f"training.n0={int(value)}"]
    elif axis == "noise":
        # injected data noise only; the likelihood keeps its configured scales
        s = float(value)
        over = [f"noise.sigma_i={s!r}", f"noise.sigma_r={s!r}"]
    elif axis == "dropout_rate":
        over = [f"dropout.rate={float(value)!r}"]
        model = "dropout"
    elif axis == "prior":
        over = [f"bpinn.prior={{kind: {value}}}"]
        model = "bpinn"
    else:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {AXES}")
    return cfg.with_overrides(over), model


@dataclass
class CellResult:
    axis: str
    value: object
    seed: int
    metrics: Optional[dict] = None
    error: Optional[str] = None


def run_cell(cfg: RunConfig, axis: str, value, seed: int, eval_grid: GridSpec, profile=None, reference=None) -> CellResult:
    try:
        cell_cfg, model = apply_axis(cfg, axis, value)
        exp = Experiment.from_config(cell_cfg, profile)
        ref = reference if reference is not None else exp.fem(eval_grid)
        run = train_model(exp, model, seed)
        metrics = evaluate_run(exp, run, ref, seed)
        return CellResult(axis, value, seed, metrics)
    except Exception as exc:  # noqa: BLE001 - a failed cell must not stop the sweep
        log.warning("sweep cell %s=%s seed=%s failed: %s", axis, value, seed, exc)
        return CellResult(axis, value, seed, error=f"{type(exc).__name__}: {exc}")


def _cell_job(args):
    return run_cell(*args)


@dataclass
class SweepResult:
    axis: str
    values: list
    seeds: list
    cells: list = field(default_factory=list)

    def per_value(self, value) -> list:
        return [c.metrics for c in self.cells if c.value == value and c.metrics is not None]

    def report(self, extra_labels: Optional[dict] = None) -> MetricsReport:
        rows = []
        for v in self.values:
            ok = self.per_value(v)
            if ok:
                labels = {self.axis: v}
                labels.update(extra_labels or {})
                rows.append((labels, ok))
        return metrics_report(rows)

    def medians(self, metric: str) -> list:
        return [float(np.median([m[metric] for m in self.per_value(v)])) for v in self.values]

    def degradation_trend(self) -> dict:
        """Whether median PICP is non-increasing and median CRPS/NLL are
        non-decreasing along the axis."""
        picp = self.medians("PICP")
        crps = self.medians("CRPS")
        nll = self.medians("NLL")
        return {
            "PICP_non_increasing": all(b <= a for a, b in zip(picp, picp[1:])),
            "CRPS_non_decreasing": all(b >= a for a, b in zip(crps, crps[1:])),
            "NLL_non_decreasing": all(b >= a for a, b in zip(nll, nll[1:])),
            "medians": {"PICP": picp, "CRPS": crps, "NLL": nll},
        }

    def failures(self) -> list:
        return [c for c in self.cells if c.error is not None]

    def tidy_rows(self) -> list:
        rows = []
        for c in self.cells:
            if c.metrics is None:
                rows.append({"axis": self.axis, "value": c.value, "seed": c.seed, "metric": "error", "result": c.error})
                continue
            for m, v in c.metrics.items():
                rows.append({"axis": self.axis, "value": c.value, "seed": c.seed, "metric": m, "result": repr(float(v))})
        return rows


def run_sweep(
    cfg: RunConfig,
    axis: str,
    values: Sequence,
    seeds: Sequence[int],
    eval_grid: Optional[GridSpec] = None,
    workers: int = 1,
    profile=None,
) -> SweepResult:
    """Train and score every (value, seed) cell against the FEM field."""
    if axis not in AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {AXES}")
    values, seeds = list(values), list(seeds)
    if not values:
        raise ValueError("sweep axis has no values")
    if not seeds:
        raise ValueError("sweep needs at least one seed")
    eval_grid = eval_grid or GridSpec(cfg.grid.nx, cfg.sweep.eval_nt)
    base = Experiment.from_config(cfg, profile)
    # no axis touches the physics, so one reference serves every cell
    reference = base.fem(eval_grid)
    jobs = [(cfg, axis, v, s, eval_grid, base.profile, reference) for v in values for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_cell_job, jobs))
    else:
        cells = [_cell_job(j) for j in jobs]
    return SweepResult(axis, values, seeds, cells)
