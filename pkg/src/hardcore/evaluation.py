"""Competition metrics, topology size sweep, and report emission."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import MaterialDataset
from .model import HardcoreConfig, parameter_count
from .training import CrossValidationResult, TrainConfig, cross_validate


@dataclass(frozen=True)
class MetricsReport:
    """Relative-error statistics of the power estimate on one record set."""

    material_id: str
    n_eval: int
    avg_rel_err: float
    p95_rel_err: float
    rel_errors: np.ndarray = field(repr=False)
    parameter_count: int | None = None
    model_file_bytes: int | None = None

    def to_dict(self) -> dict:
        return {
            "material_id": self.material_id,
            "n_eval": self.n_eval,
            "avg_rel_err": self.avg_rel_err,
            "p95_rel_err": self.p95_rel_err,
            "parameter_count": self.parameter_count,
            "model_file_bytes": self.model_file_bytes,
        }


def relative_error_stats(
    p_hat: Sequence[float],
    p: Sequence[float],
    material_id: str = "",
    parameter_count: int | None = None,
    model_file_bytes: int | None = None,
) -> MetricsReport:
    """Mean and 95th percentile of |p_hat - p| / p.

    The percentile uses linear interpolation between order statistics
    (numpy's default quantile method).
    """
    p_hat = np.asarray(p_hat, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if p_hat.shape != p.shape or p_hat.ndim != 1:
        raise ValueError(
            f"estimates and targets must be equal-length 1-d, got "
            f"{p_hat.shape} and {p.shape}"
        )
    if p_hat.size == 0:
        raise ValueError("cannot compute metrics of an empty list")
    if np.any(p <= 0):
        raise ValueError("targets must be strictly positive")
    rel = np.abs(p_hat - p) / p
    return MetricsReport(
        material_id=material_id,
        n_eval=int(rel.size),
        avg_rel_err=float(rel.mean()),
        p95_rel_err=float(np.quantile(rel, 0.95, method="linear")),
        rel_errors=rel,
        parameter_count=parameter_count,
        model_file_bytes=model_file_bytes,
    )


# ---------------------------------------------------------------------------
# Pareto sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    label: str
    n_parameters: int
    seed: int
    fold: int
    val_avg_rel_err: float | None
    val_p95_rel_err: float | None


@dataclass
class SweepResult:
    rows: list[SweepRow]
    topology_errors: dict[str, float]       # label -> best-seed mean avg err
    topology_parameters: dict[str, int]
    frontier: list[str]                     # non-dominated labels
    cv_results: dict[str, CrossValidationResult] = field(repr=False, default=None)


def pareto_frontier(points: dict[str, tuple[int, float]]) -> list[str]:
    """Labels whose (parameters, error) pair no other point dominates.

    A point dominates another if it is <= in both coordinates and < in at
    least one.
    """
    frontier = []
    for label, (n_params, err) in points.items():
        dominated = any(
            (op <= n_params and oe <= err) and (op < n_params or oe < err)
            for other, (op, oe) in points.items()
            if other != label
        )
        if not dominated:
            frontier.append(label)
    return sorted(frontier, key=lambda lb: points[lb][0])


def topology_label(config: HardcoreConfig) -> str:
    channels = "-".join(str(c) for c in config.cnn_channels)
    return f"cnn{channels}_k{config.kernel_size}_d{config.dilation}"


def pareto_sweep(
    dataset: MaterialDataset,
    topologies: Sequence[HardcoreConfig],
    config: TrainConfig,
    seeds: Sequence[int],
) -> SweepResult:
    """Cross-validate each topology and identify the non-dominated frontier.

    The per-topology summary error is the best seed's mean validation
    average relative error.
    """
    if not topologies:
        raise ValueError("sweep needs at least one topology")
    rows: list[SweepRow] = []
    errors: dict[str, float] = {}
    params: dict[str, int] = {}
    cv_results: dict[str, CrossValidationResult] = {}
    for topo in topologies:
        label = topology_label(topo)
        n_params = parameter_count(topo)
        result = cross_validate(dataset, config, seeds, model_config=topo)
        cv_results[label] = result
        for run in result.runs:
            rows.append(
                SweepRow(
                    label=label,
                    n_parameters=n_params,
                    seed=run.config.seed,
                    fold=run.fold_index,
                    val_avg_rel_err=run.val_avg_rel_err,
                    val_p95_rel_err=run.val_p95_rel_err,
                )
            )
        errors[label] = result.seed_mean_avg_rel_err[result.best_seed]
        params[label] = n_params
    frontier = pareto_frontier(
        {lb: (params[lb], errors[lb]) for lb in errors}
    )
    return SweepResult(
        rows=rows,
        topology_errors=errors,
        topology_parameters=params,
        frontier=frontier,
        cv_results=cv_results,
    )


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------

def emit_report(
    report: MetricsReport,
    out_dir: str | Path,
    record_ids: Sequence[str] | None = None,
    history: Sequence[dict] | None = None,
) -> list[Path]:
    """Write summary JSON, per-record error CSV, and learning-curve CSV."""
    if report.rel_errors.size == 0:
        raise ValueError("refusing to emit a report with no errors")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    summary_path = out_dir / "metrics.json"
    with open(summary_path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
    written.append(summary_path)

    errors_path = out_dir / "record_errors.csv"
    with open(errors_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["record_id", "rel_err"])
        for i, err in enumerate(report.rel_errors):
            rid = record_ids[i] if record_ids is not None else str(i)
            writer.writerow([rid, repr(float(err))])
    written.append(errors_path)

    if history is not None:
        curve_path = out_dir / "learning_curve.csv"
        with open(curve_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["epoch", "loss_h", "loss_p", "alpha", "lr",
                 "val_avg_rel_err", "val_p95_rel_err"]
            )
            for entry in history:
                writer.writerow([
                    entry["epoch"], repr(entry["loss_h"]),
                    repr(entry["loss_p"]), repr(entry["alpha"]),
                    repr(entry["lr"]),
                    "" if entry["val_avg_rel_err"] is None
                    else repr(entry["val_avg_rel_err"]),
                    "" if entry["val_p95_rel_err"] is None
                    else repr(entry["val_p95_rel_err"]),
                ])
        written.append(curve_path)
    return written


def write_sweep_csv(result: SweepResult, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["topology", "n_parameters", "seed", "fold",
             "val_avg_rel_err", "val_p95_rel_err", "on_frontier"]
        )
        for row in result.rows:
            writer.writerow([
                row.label, row.n_parameters, row.seed, row.fold,
                "" if row.val_avg_rel_err is None else repr(row.val_avg_rel_err),
                "" if row.val_p95_rel_err is None else repr(row.val_p95_rel_err),
                int(row.label in result.frontier),
            ])
