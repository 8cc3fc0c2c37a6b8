"""Measurement ingestion, immutable per-material datasets, and fold splits.

A material is distributed as a directory of headerless CSV files, one row per
measured waveform:

* ``B_waveform.csv`` — 1024 flux-density samples (T) per row, required
* ``H_waveform.csv`` — 1024 field-strength samples (A/m) per row, optional
* ``Frequency.csv`` — one value (Hz) per row, required
* ``Temperature.csv`` — one value (degC) per row, required
* ``Volumetric_losses.csv`` — one value (W/m^3) per row, optional

Row i across the files forms record i.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

SAMPLES_PER_PERIOD = 1024

B_FILE = "B_waveform.csv"
H_FILE = "H_waveform.csv"
F_FILE = "Frequency.csv"
T_FILE = "Temperature.csv"
P_FILE = "Volumetric_losses.csv"


class DataError(ValueError):
    """Raised for malformed or inconsistent measurement data."""


@dataclass(frozen=True)
class WaveformRecord:
    """One steady-state measurement of a core excitation period."""

    b: np.ndarray
    f: float
    T: float
    record_id: str
    h: np.ndarray | None = None
    p: float | None = None

    def __post_init__(self):
        b = np.asarray(self.b, dtype=np.float64)
        object.__setattr__(self, "b", b)
        if b.shape != (SAMPLES_PER_PERIOD,):
            raise DataError(
                f"record {self.record_id}: b must have {SAMPLES_PER_PERIOD} "
                f"samples, got shape {b.shape}"
            )
        if not np.all(np.isfinite(b)):
            raise DataError(f"record {self.record_id}: non-finite b sample")
        if self.h is not None:
            h = np.asarray(self.h, dtype=np.float64)
            object.__setattr__(self, "h", h)
            if h.shape != (SAMPLES_PER_PERIOD,):
                raise DataError(
                    f"record {self.record_id}: h must have "
                    f"{SAMPLES_PER_PERIOD} samples, got shape {h.shape}"
                )
            if not np.all(np.isfinite(h)):
                raise DataError(f"record {self.record_id}: non-finite h sample")
        if not (np.isfinite(self.f) and self.f > 0):
            raise DataError(
                f"record {self.record_id}: frequency must be positive and "
                f"finite, got {self.f}"
            )
        if not np.isfinite(self.T):
            raise DataError(f"record {self.record_id}: non-finite temperature")
        if self.p is not None and not (np.isfinite(self.p) and self.p > 0):
            raise DataError(
                f"record {self.record_id}: measured loss must be positive and "
                f"finite, got {self.p}"
            )


def compute_limits(
    records: Sequence[WaveformRecord],
) -> tuple[float, float | None]:
    """Material-wide scaling constants: max |b| and max |h| over all samples."""
    if not records:
        raise DataError("cannot compute limits of an empty dataset")
    b_lim = max(float(np.abs(r.b).max()) for r in records)
    if b_lim <= 0:
        raise DataError("b_lim must be strictly positive (all-zero b data)")
    with_h = [r for r in records if r.h is not None]
    if not with_h:
        return b_lim, None
    if len(with_h) != len(records):
        raise DataError("h sequences must be present for all records or none")
    h_lim = max(float(np.abs(r.h).max()) for r in with_h)
    if h_lim <= 0:
        raise DataError("h_lim must be strictly positive (all-zero h data)")
    return b_lim, h_lim


@dataclass(frozen=True)
class MaterialDataset:
    """All measurements of one material plus its scaling constants."""

    material_id: str
    records: tuple[WaveformRecord, ...]
    b_lim: float
    h_lim: float | None = None

    @classmethod
    def from_records(
        cls, material_id: str, records: Iterable[WaveformRecord]
    ) -> "MaterialDataset":
        records = tuple(records)
        b_lim, h_lim = compute_limits(records)
        return cls(material_id, records, b_lim, h_lim)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def has_h(self) -> bool:
        return self.h_lim is not None


def _read_rows(path: Path, expect_cols: int) -> list[np.ndarray]:
    rows: list[np.ndarray] = []
    with open(path, newline="") as fh:
        for idx, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            if len(row) != expect_cols:
                raise DataError(
                    f"{path.name} row {idx}: expected {expect_cols} values, "
                    f"got {len(row)}"
                )
            try:
                values = np.asarray(row, dtype=np.float64)
            except ValueError as exc:
                raise DataError(f"{path.name} row {idx}: {exc}") from None
            if not np.all(np.isfinite(values)):
                raise DataError(f"{path.name} row {idx}: non-finite value")
            rows.append(values)
    return rows


def load_material(
    directory: str | Path, material_id: str | None = None
) -> MaterialDataset:
    """Load one material directory into an immutable dataset.

    Raises :class:`DataError` naming the offending file and row for missing
    files, ragged rows, non-finite values, non-positive frequencies, and row
    count mismatches across files.
    """
    directory = Path(directory)
    if material_id is None:
        material_id = directory.name
    b_path = directory / B_FILE
    if not b_path.is_file():
        raise DataError(f"missing required file {b_path}")
    for name in (F_FILE, T_FILE):
        if not (directory / name).is_file():
            raise DataError(f"missing required file {directory / name}")

    b_rows = _read_rows(b_path, SAMPLES_PER_PERIOD)
    f_rows = _read_rows(directory / F_FILE, 1)
    t_rows = _read_rows(directory / T_FILE, 1)
    n = len(b_rows)
    if n == 0:
        raise DataError(f"{b_path.name}: no records")

    h_rows: list[np.ndarray] | None = None
    if (directory / H_FILE).is_file():
        h_rows = _read_rows(directory / H_FILE, SAMPLES_PER_PERIOD)
    p_rows: list[np.ndarray] | None = None
    if (directory / P_FILE).is_file():
        p_rows = _read_rows(directory / P_FILE, 1)

    for name, rows in (
        (F_FILE, f_rows),
        (T_FILE, t_rows),
        (H_FILE, h_rows),
        (P_FILE, p_rows),
    ):
        if rows is not None and len(rows) != n:
            raise DataError(
                f"{name} has {len(rows)} rows but {B_FILE} has {n}"
            )

    width = len(str(max(n - 1, 1)))
    records = []
    for i in range(n):
        f_val = float(f_rows[i][0])
        if f_val <= 0:
            raise DataError(f"{F_FILE} row {i}: non-positive frequency {f_val}")
        p_val = float(p_rows[i][0]) if p_rows is not None else None
        if p_val is not None and p_val <= 0:
            raise DataError(f"{P_FILE} row {i}: non-positive loss {p_val}")
        records.append(
            WaveformRecord(
                b=b_rows[i],
                h=h_rows[i] if h_rows is not None else None,
                f=f_val,
                T=float(t_rows[i][0]),
                p=p_val,
                record_id=f"row{i:0{width}d}",
            )
        )
    return MaterialDataset.from_records(material_id, records)


# ---------------------------------------------------------------------------
# fold splitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FoldSplit:
    """Record-to-fold assignment for k-fold cross-validation."""

    k: int
    assignments: dict[str, int] = field(repr=False)

    def fold_ids(self, fold: int) -> list[str]:
        return [rid for rid, fi in self.assignments.items() if fi == fold]

    def training_ids(self, fold: int) -> list[str]:
        return [rid for rid, fi in self.assignments.items() if fi != fold]


def stratified_kfold(
    dataset: MaterialDataset,
    k: int,
    seed: int,
    strata_fn: Callable[[WaveformRecord], object],
) -> FoldSplit:
    """Deterministic stratified k-fold split.

    Within each stratum the records are shuffled by a generator seeded with
    `seed`, then dealt round-robin to folds starting at fold 0, which keeps
    per-stratum fold sizes within one of each other.
    """
    if k < 2:
        raise ValueError(f"fold count must be >= 2, got {k}")
    strata: dict[str, list[int]] = {}
    for idx, record in enumerate(dataset.records):
        strata.setdefault(repr(strata_fn(record)), []).append(idx)

    rng = np.random.default_rng(seed)
    assignments: dict[str, int] = {}
    for label in sorted(strata):
        indices = strata[label]
        if len(indices) < k:
            warnings.warn(
                f"stratum {label} has {len(indices)} records, fewer than "
                f"k={k} folds; distributing as evenly as possible",
                stacklevel=2,
            )
        order = rng.permutation(len(indices))
        for deal, pos in enumerate(order):
            assignments[dataset.records[indices[pos]].record_id] = deal % k
    return FoldSplit(k=k, assignments=assignments)


def frequency_quartile_strata(
    dataset: MaterialDataset,
    classify: Callable[[np.ndarray], object],
) -> Callable[[WaveformRecord], tuple]:
    """Default stratification label: waveform class x quartile of ln(f).

    Quartile edges are computed over the whole material dataset.
    """
    log_f = np.log([r.f for r in dataset.records])
    edges = np.quantile(log_f, [0.25, 0.5, 0.75])

    def strata_fn(record: WaveformRecord) -> tuple:
        quartile = int(np.searchsorted(edges, np.log(record.f), side="right"))
        return (str(classify(record.b)), quartile)

    return strata_fn
