"""Synthetic elliptic hysteresis loops for tests, demos, and benchmarks.

Each record is a sinusoidal flux density with random amplitude, frequency,
temperature, and phase; the field strength is a scaled copy whose phase
leads b by a smooth function of temperature and log-frequency (a leading h
is what makes the cyclic loop area, and hence the loss target, positive).
The loss target is the loop-area power multiplied by a smooth factor in
[0.95, 1.05], mimicking the measurement discrepancy seen on real materials.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .dataset import (
    B_FILE,
    F_FILE,
    H_FILE,
    P_FILE,
    SAMPLES_PER_PERIOD,
    T_FILE,
    MaterialDataset,
    WaveformRecord,
)
from .magloss import shoelace_power

F_CENTER_HZ = 150e3


def generate_elliptic_dataset(
    n_records: int = 1000,
    seed: int = 0,
    material_id: str = "SYNTH",
    amplitude_range: tuple[float, float] = (0.02, 0.3),
    frequency_range: tuple[float, float] = (50e3, 450e3),
    temperature_range: tuple[float, float] = (25.0, 90.0),
) -> MaterialDataset:
    rng = np.random.default_rng(seed)
    theta = 2.0 * np.pi * np.arange(SAMPLES_PER_PERIOD) / SAMPLES_PER_PERIOD
    width = len(str(max(n_records - 1, 1)))

    records = []
    for i in range(n_records):
        amplitude = rng.uniform(*amplitude_range)
        f = np.exp(rng.uniform(*np.log(frequency_range)))
        temperature = rng.uniform(*temperature_range)
        phase = rng.uniform(0.0, 2.0 * np.pi)

        lnf = np.log(f / F_CENTER_HZ)
        # smooth temperature- and frequency-dependent phase lead of h over b
        lead = 0.5 + 0.2 * np.tanh((temperature - 55.0) / 35.0) \
            + 0.1 * np.tanh(lnf / 1.5)
        # amplitude permeability-style coupling, mildly temperature dependent
        h_scale = amplitude * 400.0 * (1.0 + 0.15 * np.tanh((temperature - 50.0) / 40.0))

        b = amplitude * np.sin(theta + phase)
        h = h_scale * np.sin(theta + phase + lead)

        # smooth +-5% discrepancy factor sweeping its full range across records
        factor = 1.0 + 0.05 * np.sin(
            3.1 * lnf + 0.11 * temperature + 23.0 * amplitude
        )
        p = shoelace_power(b, h, f).p_hyst * factor
        records.append(
            WaveformRecord(
                b=b,
                h=h,
                f=float(f),
                T=float(temperature),
                p=float(p),
                record_id=f"row{i:0{width}d}",
            )
        )
    return MaterialDataset.from_records(material_id, records)


def write_material_dir(dataset: MaterialDataset, directory: str | Path) -> Path:
    """Write a dataset as the five-file CSV directory format."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    def _write(name, rows):
        with open(directory / name, "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in rows:
                writer.writerow([repr(float(v)) for v in row])

    _write(B_FILE, (r.b for r in dataset.records))
    _write(F_FILE, ([r.f] for r in dataset.records))
    _write(T_FILE, ([r.T] for r in dataset.records))
    if all(r.h is not None for r in dataset.records):
        _write(H_FILE, (r.h for r in dataset.records))
    if all(r.p is not None for r in dataset.records):
        _write(P_FILE, ([r.p] for r in dataset.records))
    return directory
