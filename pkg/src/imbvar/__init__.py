"""imbvar: class-weighted variational classification for imbalanced data,
with latent-space adversarial augmentation, resampling baselines, and
rank-based evaluation metrics."""

from .data import Dataset, NormStats, SplitIndices, load_csv, synth_imbalanced
from .metrics import metrics_report, roc_auc
from .model import ModelConfig, VariationalClassifier, fit, kl_diag_gaussian
from .resampling import ClassWeights, adasyn, class_weights, smote

__all__ = [
    "Dataset", "NormStats", "SplitIndices", "load_csv", "synth_imbalanced",
    "metrics_report", "roc_auc",
    "ModelConfig", "VariationalClassifier", "fit", "kl_diag_gaussian",
    "ClassWeights", "class_weights", "smote", "adasyn",
]

__version__ = "0.1.0"
