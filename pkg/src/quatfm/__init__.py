"""Quaternion factorization machines (QFM) and their neural extension (QNFM)."""

from .data import Dataset, SparseInstance, generate_synthetic, parse_libsvm, split_dataset
from .metrics import EvalReport, auc, evaluate, rmse
from .models import (
    FmParams,
    QfmParams,
    QnfmParams,
    VariantConfig,
    init_params,
    load_checkpoint,
    param_count,
    save_checkpoint,
)
from .training import TrainConfig, grid_search, train

__all__ = [
    "Dataset",
    "EvalReport",
    "FmParams",
    "QfmParams",
    "QnfmParams",
    "SparseInstance",
    "TrainConfig",
    "VariantConfig",
    "auc",
    "evaluate",
    "generate_synthetic",
    "grid_search",
    "init_params",
    "load_checkpoint",
    "param_count",
    "parse_libsvm",
    "rmse",
    "save_checkpoint",
    "split_dataset",
    "train",
]

__version__ = "0.1.0"
