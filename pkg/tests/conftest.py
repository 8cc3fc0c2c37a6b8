import numpy as np
import pytest

from hardcore.dataset import SAMPLES_PER_PERIOD, MaterialDataset, WaveformRecord
from hardcore.synthetic import generate_elliptic_dataset

M = SAMPLES_PER_PERIOD
THETA = 2.0 * np.pi * np.arange(M) / M


def make_record(b, f=100e3, T=50.0, h=None, p=None, rid="r0"):
    return WaveformRecord(b=b, f=f, T=T, h=h, p=p, record_id=rid)


def sine_record(amplitude=0.1, cycles=1, phase=0.0, f=100e3, T=50.0,
                h_scale=40.0, lead=0.4, p_factor=1.0, rid="r0"):
    """Elliptic-loop record: h leads b so the loop area is positive."""
    b = amplitude * np.sin(cycles * THETA + phase)
    h = h_scale * np.sin(cycles * THETA + phase + lead)
    area = 0.5 * float(np.dot(b, np.roll(h, 1) - np.roll(h, -1)))
    p = f * area * p_factor
    return WaveformRecord(b=b, h=h, f=f, T=T, p=p, record_id=rid)


def sine_dataset(n=8, seed=0, material_id="TEST"):
    rng = np.random.default_rng(seed)
    records = [
        sine_record(
            amplitude=rng.uniform(0.02, 0.3),
            phase=rng.uniform(0, 2 * np.pi),
            f=np.exp(rng.uniform(np.log(50e3), np.log(400e3))),
            T=rng.uniform(25, 90),
            lead=rng.uniform(0.2, 0.7),
            rid=f"r{i}",
        )
        for i in range(n)
    ]
    return MaterialDataset.from_records(material_id, records)


@pytest.fixture(scope="session")
def small_synth():
    return generate_elliptic_dataset(n_records=24, seed=7, material_id="SYN24")
