"""Hysteresis loss from bh-loop area and the area-vs-measurement analysis.

The volumetric hysteresis loss of one steady-state period is the frequency
times the signed area of the closed polygon traced by (b, h):

    p_hyst = f * 1/2 * sum_i b[i] * (h[i-1] - h[i+1])   (circular indices)

The cyclic sum is translation invariant (sum_i (h[i-1] - h[i+1]) telescopes
to zero), so no quadrant offsets are applied. The sign is kept: it encodes
the traversal orientation, and a negative area on measured data is a data
anomaly worth surfacing rather than silently flipping.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import DataError, MaterialDataset


@dataclass(frozen=True)
class LoopLoss:
    area: float          # signed, tesla * ampere/meter
    p_hyst: float        # watt / meter^3
    orientation: int     # sign of the area


def shoelace_sum(b: np.ndarray, h: np.ndarray) -> float:
    """Cyclic trapezoid sum sum_i b[i] * (h[i-1] - h[i+1]) = 2 * signed area.

    Both sequences are centered first (mathematically neutral by translation
    invariance, numerically it stops offset magnitudes from amplifying the
    cancellation error), and the products are added with an exactly-rounded
    sum so circular shifts and traversal reversal change nothing but sign.
    """
    b = np.asarray(b, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if b.shape != h.shape or b.ndim != 1:
        raise DataError(
            f"shoelace requires equal-length 1-d sequences, got {b.shape} "
            f"and {h.shape}"
        )
    if b.size < 3:
        raise DataError(f"polygon needs at least 3 vertices, got {b.size}")
    # order-independent means keep the centering identical under shifts and
    # reversal, so those symmetries hold bit-exactly
    b = b - math.fsum(b.tolist()) / b.size
    h = h - math.fsum(h.tolist()) / h.size
    return math.fsum((b * (np.roll(h, 1) - np.roll(h, -1))).tolist())


def shoelace_power(b: np.ndarray, h: np.ndarray, f: float) -> LoopLoss:
    """Signed loop area and hysteresis power of one period at frequency f."""
    if f <= 0:
        raise DataError(f"frequency must be positive, got {f}")
    area = 0.5 * shoelace_sum(b, h)
    return LoopLoss(area=area, p_hyst=f * area, orientation=int(np.sign(area)))


@dataclass(frozen=True)
class AreaErrorStats:
    """Signed relative error (p_hyst - p) / p across a dataset."""

    errors: np.ndarray
    record_ids: list[str]
    n_skipped: int
    bin_edges: np.ndarray
    counts: np.ndarray

    @property
    def summary(self) -> dict:
        quantiles = np.quantile(self.errors, [0.05, 0.25, 0.5, 0.75, 0.95])
        return {
            "n": int(self.errors.size),
            "n_skipped": self.n_skipped,
            "min": float(self.errors.min()),
            "max": float(self.errors.max()),
            "mean": float(self.errors.mean()),
            "q05": float(quantiles[0]),
            "q25": float(quantiles[1]),
            "median": float(quantiles[2]),
            "q75": float(quantiles[3]),
            "q95": float(quantiles[4]),
        }


def area_error_stats(dataset: MaterialDataset, bins: int = 61) -> AreaErrorStats:
    """Histogram of the loop-area power against the measured loss.

    Records without an h sequence or a measured loss are skipped and counted.
    """
    errors = []
    ids = []
    skipped = 0
    for record in dataset.records:
        if record.h is None or record.p is None:
            skipped += 1
            continue
        loss = shoelace_power(record.b, record.h, record.f)
        errors.append((loss.p_hyst - record.p) / record.p)
        ids.append(record.record_id)
    if not errors:
        raise DataError(
            "no records with both h and p available for the area analysis"
        )
    errors = np.asarray(errors)
    lo, hi = float(errors.min()), float(errors.max())
    floor_span = 1e-9 * max(1.0, abs(lo), abs(hi))
    if hi - lo < floor_span:
        center = 0.5 * (lo + hi)
        lo, hi = center - floor_span, center + floor_span
    counts, edges = np.histogram(errors, bins=bins, range=(lo, hi))
    return AreaErrorStats(
        errors=errors,
        record_ids=ids,
        n_skipped=skipped,
        bin_edges=edges,
        counts=counts,
    )


def write_histogram_csv(stats: AreaErrorStats, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_left", "bin_right", "count"])
        for left, right, count in zip(
            stats.bin_edges[:-1], stats.bin_edges[1:], stats.counts
        ):
            writer.writerow([repr(float(left)), repr(float(right)), int(count)])


def write_summary_json(stats: AreaErrorStats, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(stats.summary, fh, indent=2)
        fh.write("\n")
