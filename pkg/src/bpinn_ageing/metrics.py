"""Probabilistic scores: Gaussian NLL, sample CRPS and interval coverage."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import norm

STD_FLOOR = 1e-6
METRICS = ("PICP", "CRPS", "NLL")


def nll(mean, std, reference, floor: float = STD_FLOOR) -> float:
    """Mean Gaussian negative log-likelihood of ``reference``."""
    mean, std, y = (np.asarray(a, dtype=np.float64) for a in (mean, std, reference))
    s = np.maximum(std, floor)
    z = (y - mean) / s
    return float(np.mean(0.5 * math.log(2 * math.pi) + np.log(s) + 0.5 * z * z))


def crps_samples(samples, reference, fair: bool = False) -> np.ndarray:
    """Per-point CRPS of an ensemble; ``samples`` has the ensemble on axis 0.

    The default estimator ``E|X - y| - E|X - X'| / 2`` averages over all
    ordered pairs including i == j and equals the integral of
    ``(F_S(z) - 1{z >= y})^2`` for the empirical CDF ``F_S``.  ``fair=True``
    averages over the S(S-1) distinct pairs instead.
    """
    x = np.sort(np.asarray(samples, dtype=np.float64), axis=0)
    S = x.shape[0]
    if S < 2:
        raise ValueError("CRPS needs at least two samples per point")
    y = np.asarray(reference, dtype=np.float64)
    term1 = np.mean(np.abs(x - y), axis=0)
    # sum_{i,j} |x_i - x_j| = 2 * sum_i (2i - S + 1) x_(i) for sorted x
    w = (2.0 * np.arange(S) - S + 1.0).reshape((S,) + (1,) * (x.ndim - 1))
    pair_sum = 2.0 * np.sum(w * x, axis=0)
    denom = S * (S - 1) if fair else S * S
    return term1 - 0.5 * pair_sum / denom


def crps(samples, reference, fair: bool = False) -> float:
    """Grid-averaged ensemble CRPS."""
    return float(np.mean(crps_samples(samples, reference, fair)))


def crps_gaussian(mu, sigma, y):
    """Closed-form CRPS of N(mu, sigma^2) at ``y``."""
    mu, sigma, y = (np.asarray(a, dtype=np.float64) for a in (mu, sigma, y))
    z = (y - mu) / sigma
    return sigma * (z * (2 * norm.cdf(z) - 1) + 2 * norm.pdf(z) - 1 / math.sqrt(math.pi))


def picp(lower, upper, reference) -> float:
    """Fraction of reference values inside the closed intervals."""
    lo, hi, y = (np.asarray(a, dtype=np.float64) for a in (lower, upper, reference))
    if np.any(lo > hi):
        raise ValueError("interval lower bound exceeds upper bound")
    return float(np.mean((y >= lo) & (y <= hi)))


def score(predictive, reference) -> dict:
    """PICP, CRPS and NLL of a :class:`PosteriorPredictive` on a reference
    array of the same grid shape (normalized units)."""
    ref = np.asarray(getattr(reference, "values", reference), dtype=np.float64)
    if ref.shape != predictive.mean.shape:
        raise ValueError(f"reference shape {ref.shape} != prediction shape {predictive.mean.shape}")
    if predictive.samples is None:
        raise ValueError("CRPS needs stored samples")
    return {
        "PICP": picp(predictive.lower, predictive.upper, ref),
        "CRPS": crps(predictive.samples, ref),
        "NLL": nll(predictive.mean, predictive.std, ref),
    }


@dataclass
class ReportRow:
    cell: dict
    stats: dict
    n_seeds: int


@dataclass
class MetricsReport:
    """Mean and population std (ddof=0) of each metric over seeds."""

    rows: list = field(default_factory=list)
    interval: str = "central 95% (mean -/+ 1.96 std)"
    units: str = "normalized temperature"

    def to_records(self) -> list:
        out = []
        for r in self.rows:
            for m, (mean, std) in r.stats.items():
                rec = dict(r.cell)
                rec.update(metric=m, mean=mean, std=std, n_seeds=r.n_seeds)
                out.append(rec)
        return out

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.to_records())

    def to_table(self) -> str:
        if not self.rows:
            return "(empty report)\n"
        keys = list(self.rows[0].cell)
        metrics = list(self.rows[0].stats)
        arrows = {"PICP": "(↑)", "CRPS": "(↓)", "NLL": "(↓)"}
        head = keys + [f"{m} {arrows.get(m, '')}".strip() for m in metrics]
        lines = []
        for r in self.rows:
            cells = [str(r.cell[k]) for k in keys]
            cells += [f"{r.stats[m][0]:.3f} ± {r.stats[m][1]:.3f}" for m in metrics]
            lines.append(cells)
        widths = [max(len(h), *(len(l[i]) for l in lines)) for i, h in enumerate(head)]
        fmt = "  ".join(f"{{:<{w}}}" for w in widths)
        out = [fmt.format(*head), fmt.format(*("-" * w for w in widths))]
        out += [fmt.format(*l) for l in lines]
        out.append(f"intervals: {self.interval}; units: {self.units}")
        return "\n".join(out) + "\n"


def aggregate(per_seed: Sequence[Mapping[str, float]]) -> dict:
    """``{metric: (mean, std)}`` over a list of per-seed metric dicts."""
    if not per_seed:
        raise ValueError("need at least one seed")
    names = list(per_seed[0])
    return {
        m: (float(np.mean([s[m] for s in per_seed])), float(np.std([s[m] for s in per_seed])))
        for m in names
    }


def metrics_report(cells: Sequence[tuple]) -> MetricsReport:
    """Build a report from ``(cell_labels, [per-seed metric dicts])`` pairs."""
    rep = MetricsReport()
    for labels, per_seed in cells:
        rep.rows.append(ReportRow(dict(labels), aggregate(per_seed), len(per_seed)))
    return rep
