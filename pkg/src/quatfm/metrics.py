"""AUC, log error and RMSE for binary CTR predictions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .data import Dataset, sigmoid
from .models import DEFAULT_VARIANT, Params, VariantConfig, scores


class UndefinedMetricError(ValueError):
    """The metric has no value for this input (e.g. single-class AUC)."""


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("empty input")
    return a, b


def auc(scores, labels) -> float:
    """Mann-Whitney AUC with ties credited one half (midranks)."""
    s, y = _pair(scores, labels)
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative label")
    ranks = rankdata(s, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def log_error(scores, labels, eps: float = 1e-12) -> float:
    """Mean log loss of pre-sigmoid ``scores``."""
    s, y = _pair(scores, labels)
    return float(np.mean(np.clip(np.logaddexp(0.0, s) - y * s, -np.log1p(-eps), -np.log(eps))))


def rmse(probabilities, labels) -> float:
    p, y = _pair(probabilities, labels)
    return float(np.sqrt(np.mean((p - y) ** 2)))


@dataclass(frozen=True)
class EvalReport:
    auc: float
    le: float
    rmse: float
    instance_count: int

    def to_text(self) -> str:
        return f"auc={self.auc!r} le={self.le!r} rmse={self.rmse!r} instance_count={self.instance_count}"

    @classmethod
    def from_text(cls, text: str) -> "EvalReport":
        kv = dict(tok.split("=", 1) for tok in text.split())
        return cls(float(kv["auc"]), float(kv["le"]), float(kv["rmse"]), int(kv["instance_count"]))


def dataset_scores(params: Params, ds: Dataset, variant: VariantConfig = DEFAULT_VARIANT, chunk: int = 8192):
    from .data import Batch

    idx, val, lab = ds.arrays()
    out = [
        scores(params, Batch(idx[s : s + chunk], val[s : s + chunk], lab[s : s + chunk]), variant)
        for s in range(0, len(ds), chunk)
    ]
    return np.concatenate(out) if out else np.zeros(0)


def evaluate(params: Params, ds: Dataset, variant: VariantConfig = DEFAULT_VARIANT) -> EvalReport:
    """Eval-mode AUC, LE and RMSE of ``params`` on ``ds``."""
    if len(ds) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    s = dataset_scores(params, ds, variant)
    y = ds.labels
    return EvalReport(auc(s, y), log_error(s, y), rmse(sigmoid(s), y), len(ds))
