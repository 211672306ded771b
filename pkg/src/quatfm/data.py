"""Sparse labelled instances, libsvm-style I/O, splitting and batching."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence, TextIO

import numpy as np


class DataError(ValueError):
    """Malformed or inconsistent data."""


@dataclass(frozen=True)
class SparseInstance:
    indices: tuple[int, ...]
    values: tuple[float, ...]
    label: int

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.indices) != len(self.values):
            raise DataError("indices and values differ in length")
        if self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {self.label!r}")
        if any(i < 0 for i in self.indices):
            raise DataError("feature indices must be nonnegative")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise DataError("feature indices must be strictly increasing")
        if not all(math.isfinite(v) for v in self.values):
            raise DataError("feature values must be finite")

    @property
    def nnz(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class Dataset:
    instances: tuple[SparseInstance, ...]
    n: int
    field_count: int | None = None
    _arrays: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        top = max((inst.indices[-1] for inst in self.instances if inst.indices), default=-1)
        if top >= self.n:
            raise DataError(f"feature index {top} out of range for n={self.n}")

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self) -> Iterator[SparseInstance]:
        return iter(self.instances)

    def __getitem__(self, item):
        return self.instances[item]

    @property
    def labels(self) -> np.ndarray:
        return self.arrays()[2]

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Padded ``(indices, values, labels)`` arrays for the whole dataset.

        Rows shorter than the widest instance are padded with index 0 and
        value 0.0, which contributes nothing to any model.
        """
        if self._arrays is None:
            object.__setattr__(self, "_arrays", to_arrays(self.instances))
        return self._arrays

    def subset(self, positions: Sequence[int]) -> "Dataset":
        return Dataset(tuple(self.instances[p] for p in positions), self.n, self.field_count)


def to_arrays(instances: Sequence[SparseInstance]):
    width = max((inst.nnz for inst in instances), default=0)
    idx = np.zeros((len(instances), width), dtype=np.int64)
    val = np.zeros((len(instances), width), dtype=np.float64)
    for row, inst in enumerate(instances):
        k = inst.nnz
        idx[row, :k] = inst.indices
        val[row, :k] = inst.values
    labels = np.array([inst.label for inst in instances], dtype=np.float64)
    return idx, val, labels


@dataclass(frozen=True)
class Batch:
    """A padded mini-batch: ``indices``/``values`` of shape (B, F), ``labels`` (B,)."""

    indices: np.ndarray
    values: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    @classmethod
    def from_instances(cls, instances: Sequence[SparseInstance]) -> "Batch":
        return cls(*to_arrays(instances))

    @classmethod
    def single(cls, instance: SparseInstance) -> "Batch":
        return cls.from_instances([instance])


def _parse_line(line: str, lineno: int) -> SparseInstance:
    parts = line.split()
    try:
        label = int(parts[0])
    except ValueError:
        raise DataError(f"line {lineno}: bad label {parts[0]!r}") from None
    if label not in (0, 1):
        raise DataError(f"line {lineno}: label must be 0 or 1, got {label}")
    pairs = []
    for token in parts[1:]:
        key, sep, val = token.partition(":")
        if not sep:
            raise DataError(f"line {lineno}: expected idx:val, got {token!r}")
        try:
            i, v = int(key), float(val)
        except ValueError:
            raise DataError(f"line {lineno}: expected idx:val, got {token!r}") from None
        if i < 0:
            raise DataError(f"line {lineno}: negative feature index {i}")
        if not math.isfinite(v):
            raise DataError(f"line {lineno}: non-finite value {val!r}")
        pairs.append((i, v))
    pairs.sort()
    for (i, _), (j, _) in zip(pairs, pairs[1:]):
        if i == j:
            raise DataError(f"line {lineno}: duplicate feature index {i}")
    return SparseInstance(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs), label)


def parse_libsvm(stream: TextIO | str, n: int | None = None) -> Dataset:
    """Read ``label idx:val ...`` lines into a :class:`Dataset`.

    An optional first line ``#n=<int>`` declares the feature-space size;
    ``n`` passed explicitly wins over both the header and the data.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    declared = None
    instances = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if lineno == 1 and line.startswith("#n="):
                try:
                    declared = int(line[3:])
                except ValueError:
                    raise DataError(f"line 1: bad header {line!r}") from None
            continue
        instances.append(_parse_line(line, lineno))
    top = max((inst.indices[-1] for inst in instances if inst.indices), default=-1)
    size = n if n is not None else (declared if declared is not None else top + 1)
    if top >= size:
        raise DataError(f"feature index {top} exceeds declared n={size}")
    return Dataset(tuple(instances), size)


def load_libsvm(path: str | Path, n: int | None = None) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return parse_libsvm(fh, n=n)


def format_instance(inst: SparseInstance) -> str:
    feats = " ".join(f"{i}:{v!r}" for i, v in zip(inst.indices, inst.values))
    return f"{inst.label} {feats}" if feats else str(inst.label)


def serialize_libsvm(ds: Dataset, header: bool = True) -> str:
    lines = [f"#n={ds.n}"] if header else []
    lines.extend(format_instance(inst) for inst in ds.instances)
    return "\n".join(lines) + "\n"


def save_libsvm(ds: Dataset, path: str | Path) -> None:
    Path(path).write_text(serialize_libsvm(ds), encoding="utf-8")


def split_dataset(ds: Dataset, ratios=(0.8, 0.1, 0.1), seed: int = 0):
    """Randomly partition ``ds`` into train/validation/test datasets."""
    if len(ds) == 0:
        raise DataError("cannot split an empty dataset")
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise DataError(f"ratios must be three positive numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"ratios must sum to 1, got {sum(ratios)}")
    total = len(ds)
    n_train = int(round(total * ratios[0]))
    n_val = int(round(total * ratios[1]))
    n_val = min(n_val, total - n_train)
    order = np.random.default_rng(seed).permutation(total)
    cuts = (order[:n_train], order[n_train : n_train + n_val], order[n_train + n_val :])
    return tuple(ds.subset(sorted(part.tolist())) for part in cuts)


def batches(ds: Dataset, batch_size: int, shuffle_seed: int | None = None) -> Iterator[Batch]:
    """Yield padded mini-batches covering every instance once.

    With ``shuffle_seed=None`` the dataset order is kept.
    """
    if batch_size < 1:
        raise DataError("batch_size must be >= 1")
    idx, val, lab = ds.arrays()
    order = np.arange(len(ds))
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(ds))
    for start in range(0, len(ds), batch_size):
        pick = order[start : start + batch_size]
        yield Batch(idx[pick], val[pick], lab[pick])


# Synthetic data with a planted FM teacher.


@dataclass(frozen=True)
class PlantedFM:
    """Hidden second-order FM used to generate synthetic labels."""

    w0: float
    w: np.ndarray
    V: np.ndarray

    @property
    def n(self) -> int:
        return len(self.w)

    @property
    def rank(self) -> int:
        return self.V.shape[1]

    def scores(self, idx: np.ndarray, val: np.ndarray) -> np.ndarray:
        """Teacher logits for padded ``(B, F)`` index/value arrays."""
        lin = np.sum(self.w[idx] * val, axis=1)
        xv = self.V[idx] * val[..., None]
        total = xv.sum(axis=1)
        pair = 0.5 * (np.sum(total * total, axis=1) - np.sum(xv * xv, axis=(1, 2)))
        return self.w0 + lin + pair

    def to_text(self) -> str:
        rows = [
            f"n={self.n}",
            f"rank={self.rank}",
            f"w0={self.w0!r}",
            "w=" + ",".join(repr(float(x)) for x in self.w),
            "V=" + ",".join(repr(float(x)) for x in self.V.ravel()),
        ]
        return "\n".join(rows) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PlantedFM":
        kv = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
        n, rank = int(kv["n"]), int(kv["rank"])
        w = np.array([float(x) for x in kv["w"].split(",")])
        V = np.array([float(x) for x in kv["V"].split(",")]).reshape(n, rank)
        return cls(float(kv["w0"]), w, V)


def generate_synthetic(
    n_fields: int,
    features_per_field: int,
    n_instances: int,
    seed: int,
    rank: int = 8,
    linear_scale: float = 0.6,
    interaction_scale: float = 0.2,
    bias: float = 0.0,
) -> tuple[Dataset, PlantedFM]:
    """One-hot CTR-like data whose labels follow a planted FM.

    Feature ``f * features_per_field + k`` is the ``k``-th value of field
    ``f``; every instance has exactly one active feature per field.
    Labels are Bernoulli draws from ``sigmoid(teacher score)``.
    """
    for name, count in (
        ("n_fields", n_fields),
        ("features_per_field", features_per_field),
        ("n_instances", n_instances),
        ("rank", rank),
    ):
        if count < 1:
            raise DataError(f"{name} must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    n = n_fields * features_per_field
    teacher = PlantedFM(
        w0=float(bias),
        w=rng.normal(0.0, linear_scale, size=n),
        V=rng.normal(0.0, interaction_scale, size=(n, rank)),
    )
    offsets = np.arange(n_fields) * features_per_field
    idx = rng.integers(0, features_per_field, size=(n_instances, n_fields)) + offsets
    val = np.ones((n_instances, n_fields))
    scores = teacher.scores(idx, val)
    labels = (rng.random(n_instances) < sigmoid(scores)).astype(int)
    instances = tuple(
        SparseInstance(tuple(row), (1.0,) * n_fields, int(y))
        for row, y in zip(idx.tolist(), labels.tolist())
    )
    return Dataset(instances, n, n_fields), teacher


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-np.logaddexp(0.0, -x))


def concat(datasets: Iterable[Dataset]) -> Dataset:
    datasets = list(datasets)
    n = max(ds.n for ds in datasets)
    return Dataset(tuple(i for ds in datasets for i in ds.instances), n, datasets[0].field_count)
