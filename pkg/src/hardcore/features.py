"""Feature engineering: normalized channels, scalar features, classification.

Every record is expanded into five time-series channels

    [b_ds, b_n, d1, d2, ttb]

(dataset-normalized b, per-profile normalized b, normalized circular first and
second derivatives of b_n, and tan(0.9*tan(b_n))) plus eleven scalars

    [T/75, (1/f)/max(1/f), ln(f/150kHz), db/max(db), ln(db)-max(ln(db)),
     mad/max(mad), ln(mad)-max(ln(mad)), OHE(sine, triangular, trapezoidal,
     other)]

where db is the peak-to-peak flux density and mad the mean absolute time
derivative of b. The dataset-wide maxima live in :class:`DatasetNorms` and
must be computed on the training split only.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields

import numpy as np

from .dataset import DataError, MaterialDataset, WaveformRecord

T_REFERENCE_C = 75.0
F_REFERENCE_HZ = 150e3

SERIES_CHANNELS = 5
SCALAR_FEATURES = 11
B_N_CHANNEL = 1  # index of b_n within the series block


class WaveformClass(enum.Enum):
    SINE = "sine"
    TRIANGULAR = "triangular"
    TRAPEZOIDAL = "trapezoidal"
    OTHER = "other"

    def __str__(self) -> str:
        return self.value


WAVEFORM_ORDER = (
    WaveformClass.SINE,
    WaveformClass.TRIANGULAR,
    WaveformClass.TRAPEZOIDAL,
    WaveformClass.OTHER,
)


@dataclass(frozen=True)
class ClassifierConfig:
    """Thresholds of the rule-based waveform classifier."""

    sine_energy_min: float = 0.99
    sine_crest_tol: float = 0.05
    tri_crest_tol: float = 0.08
    tri_harmonic_tol: float = 0.10
    tri_even_energy_max: float = 0.01
    trap_quiet_fraction_min: float = 0.60
    trap_quiet_threshold: float = 0.01
    trap_max_bursts: int = 6
    n_harmonics: int = 8


DEFAULT_CLASSIFIER = ClassifierConfig()


@dataclass(frozen=True)
class DatasetNorms:
    """Dataset-wide normalization constants (training split only)."""

    b_lim: float
    h_lim: float
    d1_lim: float
    d2_lim: float
    inv_f_max: float
    delta_b_max: float
    mean_abs_db_max: float

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not (np.isfinite(value) and value > 0):
                raise DataError(f"norm {f.name} must be positive, got {value}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetNorms":
        return cls(**{f.name: float(data[f.name]) for f in fields(cls)})


@dataclass(frozen=True)
class FeatureBundle:
    """Model-ready inputs for one record."""

    series: np.ndarray        # (5, 1024)
    scalars: np.ndarray       # (11,)
    profile_scale: float      # max_k |b[k]|, tesla
    waveform: WaveformClass
    record_id: str
    f: float
    h_n_target: np.ndarray | None = None


# ---------------------------------------------------------------------------
# per-profile normalization and derivatives
# ---------------------------------------------------------------------------

def per_profile_normalize(
    b: np.ndarray,
    h: np.ndarray | None,
    b_lim: float,
    h_lim: float | None,
) -> tuple[np.ndarray, np.ndarray | None, float]:
    """Normalize one profile: b by its own peak, h by h_lim * peak/b_lim.

    Returns (b_n, h_n, profile_scale) with max|b_n| = 1 exactly. The scaling
    preserves the material-wide amplitude ratio between b and h, so the
    normalized loop areas become comparable across records.
    """
    if b_lim <= 0:
        raise DataError(f"b_lim must be positive, got {b_lim}")
    b = np.asarray(b, dtype=np.float64)
    profile_scale = float(np.abs(b).max())
    if profile_scale == 0.0:
        raise DataError("degenerate profile: b is identically zero")
    b_n = b / profile_scale
    h_n = None
    if h is not None:
        if h_lim is None or h_lim <= 0:
            raise DataError(f"h_lim must be positive, got {h_lim}")
        h_n = (np.asarray(h, dtype=np.float64) / h_lim) * (b_lim / profile_scale)
    return b_n, h_n, profile_scale


def denormalize_h(
    h_n: np.ndarray, profile_scale: float, b_lim: float, h_lim: float
) -> np.ndarray:
    """Inverse of the h branch of :func:`per_profile_normalize`."""
    return h_n * (h_lim * profile_scale / b_lim)


def circular_derivatives(b_n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central first/second differences with circular wrap.

    d1[k] = (b[k+1] - b[k-1]) / 2,  d2[k] = b[k+1] - 2 b[k] + b[k-1].
    """
    b_n = np.asarray(b_n, dtype=np.float64)
    fwd = np.roll(b_n, -1)
    back = np.roll(b_n, 1)
    return (fwd - back) / 2.0, fwd - 2.0 * b_n + back


def normalize_derivatives(
    d1_raw: np.ndarray, d2_raw: np.ndarray, d1_lim: float, d2_lim: float
) -> tuple[np.ndarray, np.ndarray]:
    if d1_lim <= 0 or d2_lim <= 0:
        raise DataError(
            f"derivative limits must be positive, got {d1_lim}, {d2_lim}"
        )
    return d1_raw / d1_lim, d2_raw / d2_lim


def tan_tan(b_n: np.ndarray) -> np.ndarray:
    """Soft-saturating channel tan(0.9 * tan(b_n)); requires |b_n| <= 1."""
    b_n = np.asarray(b_n, dtype=np.float64)
    if np.any(np.abs(b_n) > 1.0):
        raise DataError("tan_tan input must lie in [-1, 1]")
    return np.tan(0.9 * np.tan(b_n))


# ---------------------------------------------------------------------------
# waveform classification
# ---------------------------------------------------------------------------

def _circular_burst_count(active: np.ndarray) -> int:
    """Count contiguous runs of True with wraparound."""
    if not active.any():
        return 0
    if active.all():
        return 1
    starts = int(np.sum(active & ~np.roll(active, 1)))
    return starts


def waveform_diagnostics(
    b: np.ndarray, config: ClassifierConfig = DEFAULT_CLASSIFIER
) -> dict:
    """Crest/form factors and harmonic magnitudes used by the classifier."""
    b = np.asarray(b, dtype=np.float64)
    y = b - b.mean()
    peak = float(np.abs(y).max())
    # mean subtraction leaves ~1e-16 residue on constant input
    if peak <= 1e-9 * float(np.abs(b).max()):
        raise DataError("cannot classify a constant sequence")
    rms = float(np.sqrt(np.mean(y * y)))
    mean_abs = float(np.mean(np.abs(y)))
    spectrum = np.abs(np.fft.rfft(y))
    # one-sided energy weights: DC and Nyquist once, everything else twice
    weights = np.full(spectrum.shape, 2.0)
    weights[0] = 1.0
    if y.size % 2 == 0:
        weights[-1] = 1.0
    energy = weights * spectrum**2
    fundamental = int(np.argmax(spectrum[1:])) + 1
    harmonics = []
    for n in range(1, config.n_harmonics + 1):
        k = n * fundamental
        harmonics.append(spectrum[k] if k < spectrum.size else 0.0)
    harmonics = np.asarray(harmonics) / spectrum[fundamental]
    return {
        "crest": peak / rms,
        "form": rms / mean_abs,
        "fundamental_bin": fundamental,
        "fundamental_energy_fraction": float(
            energy[fundamental] / energy[1:].sum()
        ),
        "harmonic_magnitudes": harmonics,
        "total_ac_energy": float(energy[1:].sum()),
    }


def classify_waveform(
    b: np.ndarray, config: ClassifierConfig = DEFAULT_CLASSIFIER
) -> WaveformClass:
    """Rule-chain classification into sine / triangular / trapezoidal / other.

    sine: the fundamental carries >= sine_energy_min of the AC spectral
    energy and the crest factor sits within sine_crest_tol of sqrt(2).

    triangular: crest within tri_crest_tol of sqrt(3), even harmonics
    carry almost no amplitude, and odd harmonic magnitudes follow the
    1/n^2 triangle decay within tri_harmonic_tol.

    trapezoidal: at least trap_quiet_fraction_min of the samples have a
    second derivative below trap_quiet_threshold of its peak, and the loud
    remainder clusters into at most trap_max_bursts circular bursts
    (the switching transitions).
    """
    diag = waveform_diagnostics(b, config)
    crest = diag["crest"]

    if (
        diag["fundamental_energy_fraction"] >= config.sine_energy_min
        and abs(crest - math.sqrt(2.0)) < config.sine_crest_tol
    ):
        return WaveformClass.SINE

    if abs(crest - math.sqrt(3.0)) < config.tri_crest_tol:
        mags = diag["harmonic_magnitudes"]
        odd_ok = True
        even_ok = True
        for n in range(2, config.n_harmonics + 1):
            mag = mags[n - 1]
            if n % 2 == 0:
                even_ok = even_ok and mag <= config.tri_even_energy_max
            else:
                odd_ok = odd_ok and abs(mag * n * n - 1.0) <= config.tri_harmonic_tol
        if odd_ok and even_ok:
            return WaveformClass.TRIANGULAR

    y = np.asarray(b, dtype=np.float64)
    y = y - y.mean()
    y = y / np.abs(y).max()
    _, d2 = circular_derivatives(y)
    d2_peak = np.abs(d2).max()
    if d2_peak > 0:
        loud = np.abs(d2) >= config.trap_quiet_threshold * d2_peak
        quiet_fraction = 1.0 - loud.mean()
        if (
            quiet_fraction >= config.trap_quiet_fraction_min
            and _circular_burst_count(loud) <= config.trap_max_bursts
        ):
            return WaveformClass.TRAPEZOIDAL

    return WaveformClass.OTHER


def one_hot(waveform: WaveformClass) -> np.ndarray:
    encoding = np.zeros(len(WAVEFORM_ORDER))
    encoding[WAVEFORM_ORDER.index(waveform)] = 1.0
    return encoding


# ---------------------------------------------------------------------------
# scalar features and norms
# ---------------------------------------------------------------------------

def peak_to_peak(b: np.ndarray) -> float:
    return float(np.max(b) - np.min(b))


def mean_abs_db_dt(b: np.ndarray, f: float) -> float:
    """Mean |db/dt| over the period, from circular central differences.

    The sample spacing is 1/(f*M) seconds, so the physical derivative is
    the central difference scaled by f*M.
    """
    b = np.asarray(b, dtype=np.float64)
    diffs = (np.roll(b, -1) - np.roll(b, 1)) / 2.0
    return float(np.mean(np.abs(diffs)) * f * b.size)


def scalar_features(
    b: np.ndarray,
    f: float,
    T: float,
    waveform: WaveformClass,
    norms: DatasetNorms,
) -> np.ndarray:
    """Assemble the 11 scalar inputs in their fixed order."""
    delta_b = peak_to_peak(b)
    if delta_b <= 0:
        raise DataError("peak-to-peak flux must be positive")
    mad = mean_abs_db_dt(b, f)
    if mad <= 0:
        raise DataError("mean |db/dt| must be positive")
    values = [
        T / T_REFERENCE_C,
        (1.0 / f) / norms.inv_f_max,
        math.log(f / F_REFERENCE_HZ),
        delta_b / norms.delta_b_max,
        math.log(delta_b) - math.log(norms.delta_b_max),
        mad / norms.mean_abs_db_max,
        math.log(mad) - math.log(norms.mean_abs_db_max),
    ]
    return np.concatenate([values, one_hot(waveform)])


def compute_norms(
    records,
    b_lim: float,
    h_lim: float,
) -> DatasetNorms:
    """Derivative and scalar maxima over a training split."""
    d1_lim = 0.0
    d2_lim = 0.0
    inv_f_max = 0.0
    delta_b_max = 0.0
    mad_max = 0.0
    for record in records:
        b_n, _, _ = per_profile_normalize(record.b, None, b_lim, h_lim)
        d1_raw, d2_raw = circular_derivatives(b_n)
        d1_lim = max(d1_lim, float(np.abs(d1_raw).max()))
        d2_lim = max(d2_lim, float(np.abs(d2_raw).max()))
        inv_f_max = max(inv_f_max, 1.0 / record.f)
        delta_b_max = max(delta_b_max, peak_to_peak(record.b))
        mad_max = max(mad_max, mean_abs_db_dt(record.b, record.f))
    return DatasetNorms(
        b_lim=b_lim,
        h_lim=h_lim,
        d1_lim=d1_lim,
        d2_lim=d2_lim,
        inv_f_max=inv_f_max,
        delta_b_max=delta_b_max,
        mean_abs_db_max=mad_max,
    )


# ---------------------------------------------------------------------------
# bundle assembly
# ---------------------------------------------------------------------------

def build_features(
    record: WaveformRecord,
    norms: DatasetNorms,
    classifier: ClassifierConfig = DEFAULT_CLASSIFIER,
) -> FeatureBundle:
    """Expand one record into the model's five channels and eleven scalars."""
    b_n, h_n, profile_scale = per_profile_normalize(
        record.b, record.h, norms.b_lim, norms.h_lim
    )
    d1_raw, d2_raw = circular_derivatives(b_n)
    d1, d2 = normalize_derivatives(d1_raw, d2_raw, norms.d1_lim, norms.d2_lim)
    ttb = tan_tan(b_n)
    waveform = classify_waveform(record.b, classifier)
    scalars = scalar_features(record.b, record.f, record.T, waveform, norms)
    series = np.stack([record.b / norms.b_lim, b_n, d1, d2, ttb])
    return FeatureBundle(
        series=series,
        scalars=scalars,
        profile_scale=profile_scale,
        waveform=waveform,
        record_id=record.record_id,
        f=record.f,
        h_n_target=h_n,
    )


class FeatureBatch:
    """Stacked feature bundles plus the targets needed for training."""

    def __init__(self, bundles: list[FeatureBundle], records=None):
        if not bundles:
            raise DataError("cannot build an empty feature batch")
        self.record_ids = [bu.record_id for bu in bundles]
        self.series = np.stack([bu.series for bu in bundles])
        self.scalars = np.stack([bu.scalars for bu in bundles])
        self.profile_scale = np.array([bu.profile_scale for bu in bundles])
        self.f = np.array([bu.f for bu in bundles])
        if all(bu.h_n_target is not None for bu in bundles):
            self.h_n = np.stack([bu.h_n_target for bu in bundles])
        else:
            self.h_n = None
        if records is not None and all(r.p is not None for r in records):
            self.p = np.array([r.p for r in records])
        else:
            self.p = None

    def __len__(self) -> int:
        return len(self.record_ids)

    def subset(self, indices) -> "FeatureBatch":
        out = object.__new__(FeatureBatch)
        out.record_ids = [self.record_ids[i] for i in indices]
        out.series = self.series[indices]
        out.scalars = self.scalars[indices]
        out.profile_scale = self.profile_scale[indices]
        out.f = self.f[indices]
        out.h_n = self.h_n[indices] if self.h_n is not None else None
        out.p = self.p[indices] if self.p is not None else None
        return out
