"""Dual-objective training with a scheduled loss ramp and cross-validation.

The sequence loss is the MSE between normalized field estimates and targets;
the power loss is the mean squared logarithmic error. They are blended as

    L_total = alpha * L_msle_p + (1 - alpha) * L_mse_h,
    alpha = (beta * i_epoch) / k_epoch

so training starts purely on the h sequence (alpha = 0 at epoch 0) and
shifts toward the power estimate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import (
    DataError,
    FoldSplit,
    MaterialDataset,
    WaveformRecord,
    compute_limits,
)
from .features import (
    ClassifierConfig,
    DEFAULT_CLASSIFIER,
    FeatureBatch,
    build_features,
    compute_norms,
)
from .model import HardcoreConfig, HardcoreModel
from .optim import NAdam
from .tensor import Tensor

P_HAT_FLOOR = 1e-9
FULL_BATCH_LIMIT = 4096
DEFAULT_MINIBATCH = 1024


class TrainingDivergedError(RuntimeError):
    """Raised when the total loss becomes non-finite."""

    def __init__(self, epoch: int, value: float):
        super().__init__(
            f"training diverged at epoch {epoch}: total loss = {value}"
        )
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    k_epoch: int = 10000
    beta: float = 1.0
    batch_size: int | None = None  # None: full batch up to FULL_BATCH_LIMIT
    learning_rate: float = 5e-3
    lr_decay: float | None = None  # None: 100x decay over k_epoch
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    nesterov: bool = True
    seed: int = 0
    k_folds: int = 4
    eval_every: int = 50

    def __post_init__(self):
        if self.k_epoch < 1:
            raise ValueError(f"k_epoch must be >= 1, got {self.k_epoch}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.k_folds < 2:
            raise ValueError(f"k_folds must be >= 2, got {self.k_folds}")

    @property
    def decay_factor(self) -> float:
        if self.lr_decay is not None:
            return self.lr_decay
        return 0.01 ** (1.0 / self.k_epoch)

    def resolve_batch_size(self, n_records: int) -> int:
        if self.batch_size is not None:
            return min(self.batch_size, n_records)
        return n_records if n_records <= FULL_BATCH_LIMIT else DEFAULT_MINIBATCH

    @classmethod
    def from_mapping(cls, mapping: dict) -> "TrainConfig":
        kwargs = {}
        for f in fields(cls):
            if f.name not in mapping:
                continue
            raw = mapping[f.name]
            if f.name in ("batch_size", "lr_decay") and str(raw).lower() in (
                "none", "auto", "",
            ):
                kwargs[f.name] = None
            elif f.name in ("k_epoch", "batch_size", "seed", "k_folds",
                            "eval_every"):
                kwargs[f.name] = int(raw)
            elif f.name == "nesterov":
                kwargs[f.name] = str(raw).lower() in ("1", "true", "yes", "on")
            else:
                kwargs[f.name] = float(raw)
        return cls(**kwargs)


# ---------------------------------------------------------------------------
# losses and schedule
# ---------------------------------------------------------------------------

def loss_h(h_hat_n: Tensor, h_n: np.ndarray) -> Tensor:
    """Mean squared error over all records and samples."""
    h_n = np.asarray(h_n, dtype=np.float64)
    if h_hat_n.data.shape != h_n.shape:
        raise ValueError(
            f"loss_h shape mismatch: {h_hat_n.data.shape} vs {h_n.shape}"
        )
    return ((h_hat_n - h_n) ** 2).mean()


def loss_p(p_hat: Tensor, p: np.ndarray) -> Tensor:
    """Mean squared logarithmic error, with p_hat floored at 1e-9 W/m^3.

    The floor keeps the log finite for untrained models; its gradient is
    zero wherever it is active.
    """
    p = np.asarray(p, dtype=np.float64)
    if p_hat.data.shape != p.shape:
        raise ValueError(
            f"loss_p shape mismatch: {p_hat.data.shape} vs {p.shape}"
        )
    if np.any(p <= 0):
        raise ValueError("measured losses must be strictly positive")
    return ((p_hat.clamp_min(P_HAT_FLOOR).log() - np.log(p)) ** 2).mean()


def alpha_schedule(i_epoch: int, k_epoch: int, beta: float) -> float:
    """Linear ramp alpha = (beta * i_epoch) / k_epoch."""
    if not 0 <= i_epoch < k_epoch:
        raise ValueError(
            f"epoch index {i_epoch} outside [0, {k_epoch})"
        )
    return (beta * i_epoch) / k_epoch


def total_loss(l_p: Tensor, l_h: Tensor, alpha: float) -> Tensor:
    return alpha * l_p + (1.0 - alpha) * l_h


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainRun:
    """Outcome of one training run (one fold, one seed)."""

    config: TrainConfig
    fold_index: int | None
    material_id: str
    history: list[dict] = field(repr=False)
    model: HardcoreModel = field(repr=False)
    val_avg_rel_err: float | None = None
    val_p95_rel_err: float | None = None

    def write_log(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for entry in self.history:
                fh.write(json.dumps(entry) + "\n")


def _trainable(records: Sequence[WaveformRecord]) -> list[WaveformRecord]:
    return [r for r in records if r.h is not None and r.p is not None]


def _validation_metrics(
    model: HardcoreModel, batch: FeatureBatch | None
) -> tuple[float | None, float | None]:
    if batch is None or batch.p is None:
        return None, None
    _, _, p_hat = model.predict(batch)
    rel = np.abs(p_hat - batch.p) / batch.p
    return float(rel.mean()), float(np.quantile(rel, 0.95))


def train(
    dataset: MaterialDataset,
    fold_split: FoldSplit | None,
    fold_index: int | None,
    config: TrainConfig,
    model_config: HardcoreConfig | None = None,
    classifier: ClassifierConfig = DEFAULT_CLASSIFIER,
) -> TrainRun:
    """Train one model on the given fold's training split.

    With fold_split/fold_index None the model trains on every usable record
    (final-delivery mode) and validation metrics stay None. Records missing
    h or p are excluded from the training split. Deterministic for a fixed
    (config.seed, dataset).
    """
    if model_config is None:
        model_config = HardcoreConfig()

    if fold_split is not None and fold_index is not None:
        val_ids = set(fold_split.fold_ids(fold_index))
        train_records = _trainable(
            [r for r in dataset.records if r.record_id not in val_ids]
        )
        val_records = [r for r in dataset.records if r.record_id in val_ids]
        val_records = [r for r in val_records if r.p is not None]
    else:
        train_records = _trainable(dataset.records)
        val_records = []
    if not train_records:
        raise DataError(
            "training split is empty (records need both h and p to train)"
        )

    b_lim, h_lim = compute_limits(train_records)
    norms = compute_norms(train_records, b_lim, h_lim)

    train_batch = FeatureBatch(
        [build_features(r, norms, classifier) for r in train_records],
        train_records,
    )
    val_batch = None
    if val_records:
        val_batch = FeatureBatch(
            [build_features(r, norms, classifier) for r in val_records],
            val_records,
        )

    model = HardcoreModel(
        model_config, norms, dataset.material_id, seed=config.seed
    )
    optimizer = NAdam(
        model.parameter_tensors(),
        lr=config.learning_rate,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.eps,
        nesterov=config.nesterov,
    )
    shuffle_rng = np.random.default_rng(config.seed)

    n = len(train_batch)
    batch_size = config.resolve_batch_size(n)
    decay = config.decay_factor
    history: list[dict] = []

    for epoch in range(config.k_epoch):
        alpha = alpha_schedule(epoch, config.k_epoch, config.beta)

        if batch_size >= n:
            chunks = [train_batch]
        else:
            order = shuffle_rng.permutation(n)
            chunks = [
                train_batch.subset(order[lo:lo + batch_size])
                for lo in range(0, n, batch_size)
            ]

        epoch_l_h = 0.0
        epoch_l_p = 0.0
        for chunk in chunks:
            h_hat_n, _, p_hat = model.forward(chunk)
            l_h = loss_h(h_hat_n, chunk.h_n)
            l_p = loss_p(p_hat, chunk.p)
            l_total = total_loss(l_p, l_h, alpha)
            value = l_total.item()
            if not np.isfinite(value):
                raise TrainingDivergedError(epoch, value)
            optimizer.zero_grad()
            l_total.backward()
            optimizer.step()
            weight = len(chunk) / n
            epoch_l_h += l_h.item() * weight
            epoch_l_p += l_p.item() * weight

        entry = {
            "epoch": epoch,
            "loss_h": epoch_l_h,
            "loss_p": epoch_l_p,
            "alpha": alpha,
            "lr": optimizer.lr,
            "val_avg_rel_err": None,
            "val_p95_rel_err": None,
        }
        if (epoch + 1) % config.eval_every == 0 or epoch == config.k_epoch - 1:
            avg, p95 = _validation_metrics(model, val_batch)
            entry["val_avg_rel_err"] = avg
            entry["val_p95_rel_err"] = p95
        history.append(entry)
        optimizer.lr *= decay

    avg, p95 = _validation_metrics(model, val_batch)
    return TrainRun(
        config=config,
        fold_index=fold_index,
        material_id=dataset.material_id,
        history=history,
        model=model,
        val_avg_rel_err=avg,
        val_p95_rel_err=p95,
    )


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------

@dataclass
class CrossValidationResult:
    runs: list[TrainRun]
    best_seed: int
    seed_mean_avg_rel_err: dict[int, float]

    def runs_for_seed(self, seed: int) -> list[TrainRun]:
        return [r for r in self.runs if r.config.seed == seed]


def cross_validate(
    dataset: MaterialDataset,
    config: TrainConfig,
    seeds: Sequence[int],
    fold_split: FoldSplit | None = None,
    model_config: HardcoreConfig | None = None,
    classifier: ClassifierConfig = DEFAULT_CLASSIFIER,
    strata_fn=None,
) -> CrossValidationResult:
    """Train k_folds x len(seeds) runs and pick the best seed.

    The best seed minimizes the mean validation average relative error over
    its folds (the competition metric), not the training loss. The fold
    split is shared across seeds; by default it is stratified on waveform
    class x ln-f quartile with config.seed.
    """
    from .dataset import frequency_quartile_strata, stratified_kfold
    from .features import classify_waveform

    if not seeds:
        raise ValueError("at least one seed is required")
    if fold_split is None:
        if strata_fn is None:
            strata_fn = frequency_quartile_strata(
                dataset, lambda b: classify_waveform(b, classifier)
            )
        fold_split = stratified_kfold(
            dataset, config.k_folds, config.seed, strata_fn
        )

    runs: list[TrainRun] = []
    for seed in seeds:
        run_config = replace(config, seed=seed)
        for fold in range(fold_split.k):
            runs.append(
                train(dataset, fold_split, fold, run_config,
                      model_config=model_config, classifier=classifier)
            )

    seed_means: dict[int, float] = {}
    for seed in seeds:
        errs = [
            r.val_avg_rel_err
            for r in runs
            if r.config.seed == seed and r.val_avg_rel_err is not None
        ]
        seed_means[seed] = float(np.mean(errs)) if errs else float("inf")
    best_seed = min(seed_means, key=lambda s: (seed_means[s], s))
    return CrossValidationResult(
        runs=runs, best_seed=best_seed, seed_mean_avg_rel_err=seed_means
    )
