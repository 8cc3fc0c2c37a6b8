"""Residual dilated-CNN estimation of ferrite-core H fields and power losses."""

from .dataset import (
    DataError,
    FoldSplit,
    MaterialDataset,
    WaveformRecord,
    compute_limits,
    load_material,
    stratified_kfold,
)
from .evaluation import (
    MetricsReport,
    emit_report,
    pareto_sweep,
    relative_error_stats,
)
from .features import (
    ClassifierConfig,
    DatasetNorms,
    FeatureBatch,
    FeatureBundle,
    WaveformClass,
    build_features,
    classify_waveform,
    per_profile_normalize,
)
from .magloss import AreaErrorStats, LoopLoss, area_error_stats, shoelace_power
from .model import (
    HardcoreConfig,
    HardcoreModel,
    ModelError,
    load_model,
    parameter_count,
    save_model,
)
from .optim import NAdam
from .synthetic import generate_elliptic_dataset, write_material_dir
from .training import (
    TrainConfig,
    TrainRun,
    TrainingDivergedError,
    alpha_schedule,
    cross_validate,
    loss_h,
    loss_p,
    train,
)

__version__ = "0.1.0"
