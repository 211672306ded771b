"""Log-loss training with Adam, dropout, early stopping and grid search."""

from __future__ import annotations

import csv
import itertools
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import Batch, Dataset, batches, sigmoid
from .gradients import forward_backward
from .metrics import dataset_scores
from .models import DEFAULT_VARIANT, Params, VariantConfig, init_params

log = logging.getLogger(__name__)

LOSS_EPS = 1e-12


def log_loss(predictions, labels, eps: float = LOSS_EPS) -> float:
    """Summed log loss of pre-sigmoid scores; divide by the count for the mean."""
    s = np.asarray(predictions, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    if s.shape != y.shape:
        raise ValueError(f"length mismatch: {s.size} vs {y.size}")
    if s.size == 0:
        raise ValueError("empty input")
    return float(np.sum(instance_log_loss(s, y, eps)))


def instance_log_loss(s: np.ndarray, y: np.ndarray, eps: float = LOSS_EPS) -> np.ndarray:
    """Per-instance log loss, equal to clamping the probability to ``[eps, 1 - eps]``.

    Written as ``log(1 + e^s) - y s`` so large scores keep full precision.
    """
    return np.clip(np.logaddexp(0.0, s) - y * s, -np.log1p(-eps), -np.log(eps))


def log_loss_grad(predictions, labels) -> np.ndarray:
    """Per-instance ``dL/dy``: ``sigmoid(y) - label``."""
    return sigmoid(predictions) - np.asarray(labels, dtype=np.float64)


@dataclass
class TrainConfig:
    model_kind: str = "qfm"
    d: int = 64
    l: int = 1
    rho: float = 0.1
    batch_size: int = 512
    learning_rate: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    max_epochs: int = 100
    patience: int = 3
    seed: int = 0
    variant: VariantConfig = field(default_factory=VariantConfig)
    workers: int = 1

    def __post_init__(self):
        if self.model_kind not in ("fm", "qfm", "qnfm"):
            raise ValueError(f"unknown model kind {self.model_kind!r}")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.model_kind == "qnfm" and self.l < 1:
            raise ValueError("l must be >= 1 for qnfm")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def describe(self) -> str:
        items = asdict(self)
        variant = items.pop("variant")
        items.update(variant)
        return " ".join(f"{k}={v}" for k, v in items.items())


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: Params
    v: Params
    t: int = 0

    @classmethod
    def zeros(cls, params: Params) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like(), 0)


def adam_step(
    params: Params,
    grads: Params,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[Params, AdamState]:
    """Bias-corrected Adam update, applied in place to every array."""
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for name, p in params.arrays().items():
        g = getattr(grads, name)
        if g.shape != p.shape:
            raise ValueError(f"gradient {name} has shape {g.shape}, expected {p.shape}")
        m = getattr(state.m, name)
        v = getattr(state.v, name)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params, state


# ---------------------------------------------------------------------------
# Early stopping


class EarlyStopping:
    """Stop after ``patience`` consecutive strict increases of the monitored loss."""

    def __init__(self, patience: int = 3):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = 0
        self.increases = 0
        self._last = None

    def update(self, epoch: int, loss: float) -> bool:
        """Record ``loss`` for ``epoch``; returns True when training should stop."""
        if self._last is not None and loss > self._last:
            self.increases += 1
        else:
            self.increases = 0
        self._last = loss
        if loss < self.best:
            self.best = loss
            self.best_epoch = epoch
        return self.increases >= self.patience


# ---------------------------------------------------------------------------
# Training loop


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    seconds: float


@dataclass
class TrainResult:
    params: Params
    history: list[EpochRecord]
    best_epoch: int
    best_val_loss: float
    stopped_early: bool
    config: TrainConfig


def mean_log_loss(params: Params, ds: Dataset, variant: VariantConfig) -> float:
    return log_loss(dataset_scores(params, ds, variant), ds.labels) / len(ds)


def _validation_loss(params: Params, ds: Dataset, variant: VariantConfig) -> float:
    return mean_log_loss(params, ds, variant)


def _split(batch: Batch, parts: int) -> list[Batch]:
    cuts = np.array_split(np.arange(len(batch)), parts)
    return [Batch(batch.indices[c], batch.values[c], batch.labels[c]) for c in cuts if len(c)]


def batch_gradients(
    params: Params,
    batch: Batch,
    config: TrainConfig,
    rng: np.random.Generator,
    pool: ThreadPoolExecutor | None = None,
) -> tuple[float, Params]:
    """Summed train-mode loss and batch-mean gradients for one mini-batch."""
    scale = 1.0 / len(batch)

    def run(part: Batch, part_rng):
        y, grads = forward_backward(
            params,
            part,
            lambda y: log_loss_grad(y, part.labels) * scale,
            config.variant,
            True,
            config.rho,
            part_rng,
        )
        return log_loss(y, part.labels), grads

    if pool is None or config.workers == 1:
        loss, grads = run(batch, rng)
        return loss, grads
    parts = _split(batch, config.workers)
    rngs = [np.random.default_rng(s) for s in rng.integers(0, 2**63, size=len(parts))]
    results = list(pool.map(run, parts, rngs))
    loss = 0.0
    grads = params.zeros_like()
    for part_loss, part_grads in results:
        loss += part_loss
        for name, arr in grads.arrays().items():
            arr += getattr(part_grads, name)
    return loss, grads


def train(
    config: TrainConfig,
    train_ds: Dataset,
    val_ds: Dataset,
    params: Params | None = None,
) -> TrainResult:
    """Mini-batch Adam on the summed log loss with early stopping.

    Returns the snapshot with the lowest validation loss. With
    ``max_epochs=0`` the initial parameters are returned untouched.
    """
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise ValueError("training and validation sets must be nonempty")
    if params is None:
        params = init_params(
            config.model_kind,
            max(train_ds.n, val_ds.n),
            config.d,
            config.l,
            seed=config.seed,
            base_rate=float(train_ds.labels.mean()),
        )
    state = AdamState.zeros(params)
    master = np.random.default_rng(config.seed)
    dropout_rng = np.random.default_rng([config.seed, 1])
    stopper = EarlyStopping(config.patience)
    history: list[EpochRecord] = []
    best = params.copy()
    best_loss = _validation_loss(params, val_ds, config.variant)
    stopped = False
    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for epoch in range(1, config.max_epochs + 1):
            start = time.perf_counter()
            total = 0.0
            shuffle_seed = int(master.integers(0, 2**63))
            for batch in batches(train_ds, config.batch_size, shuffle_seed):
                loss, grads = batch_gradients(params, batch, config, dropout_rng, pool)
                total += loss
                adam_step(params, grads, state, config.learning_rate, config.beta1, config.beta2, config.epsilon)
            val_loss = _validation_loss(params, val_ds, config.variant)
            record = EpochRecord(epoch, total / len(train_ds), val_loss, time.perf_counter() - start)
            history.append(record)
            log.info("epoch %d train %.5f val %.5f (%.2fs)", epoch, record.train_loss, val_loss, record.seconds)
            stop = stopper.update(epoch, val_loss)
            if stopper.best_epoch == epoch:
                best = params.copy()
                best_loss = val_loss
            if stop:
                stopped = True
                break
    finally:
        if pool is not None:
            pool.shutdown()
    return TrainResult(best, history, stopper.best_epoch, best_loss, stopped, config)


def run_one_epoch(config: TrainConfig, train_ds: Dataset, params: Params | None = None) -> float:
    """Time a single training epoch (no validation); returns seconds."""
    if params is None:
        params = init_params(config.model_kind, train_ds.n, config.d, config.l, seed=config.seed)
    state = AdamState.zeros(params)
    rng = np.random.default_rng([config.seed, 1])
    start = time.perf_counter()
    for batch in batches(train_ds, config.batch_size, config.seed):
        _, grads = batch_gradients(params, batch, config, rng)
        adam_step(params, grads, state, config.learning_rate, config.beta1, config.beta2, config.epsilon)
    return time.perf_counter() - start


def write_history(path: str | Path, result: TrainResult) -> None:
    """CSV with a ``#`` config line followed by per-epoch rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {result.config.describe()}\n")
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "seconds"])
        for r in result.history:
            writer.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), repr(r.seconds)])


def read_history(path: str | Path) -> tuple[str, list[EpochRecord]]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()[1:].strip()
        rows = list(csv.DictReader(fh))
    return header, [
        EpochRecord(int(r["epoch"]), float(r["train_loss"]), float(r["val_loss"]), float(r["seconds"]))
        for r in rows
    ]


# ---------------------------------------------------------------------------
# Grid search


@dataclass
class GridRow:
    d: int
    l: int
    rho: float
    val_loss: float
    epochs: int
    result: TrainResult


def grid_search(
    base: TrainConfig,
    train_ds: Dataset,
    val_ds: Dataset,
    d_values=(4, 8, 16, 32, 64),
    l_values=(1, 2, 3, 4, 5),
    rho_values=(0.1, 0.2, 0.3, 0.4, 0.5),
    overrides: list[dict] | None = None,
) -> tuple[GridRow, list[GridRow]]:
    """Train every grid cell and rank by best validation log loss.

    ``overrides`` replaces the Cartesian grid with explicit per-cell field
    updates of ``base`` (handy for comparing e.g. ``max_epochs`` settings).
    """
    if overrides is None:
        if base.model_kind != "qnfm":
            l_values, rho_values = (base.l,), (base.rho,)
        overrides = [dict(d=d, l=l, rho=r) for d, l, r in itertools.product(d_values, l_values, rho_values)]
    if not overrides:
        raise ValueError("empty grid")
    rows = []
    for cell in overrides:
        config = replace(base, **cell)
        result = train(config, train_ds, val_ds)
        rows.append(GridRow(config.d, config.l, config.rho, result.best_val_loss, len(result.history), result))
    table = sorted(rows, key=lambda r: r.val_loss)
    return table[0], rows


def threads_from_env(default: int = 1) -> int:
    raw = os.environ.get("QUATFM_THREADS")
    return default if not raw else max(1, int(raw))
