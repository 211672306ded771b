"""Plain FM, QFM and QNFM: parameters, forward passes and accounting.

Batched forward passes work on padded :class:`~quatfm.data.Batch` arrays.
Embeddings of a batch are held as a single array of shape ``(4, B, F, d)``
(cores, instances, nonzero slots, latent dimension).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import ClassVar

import numpy as np

from . import quaternion as qt
from .data import Batch, SparseInstance

MODEL_KINDS = ("fm", "qfm", "qnfm")


@dataclass(frozen=True)
class VariantConfig:
    """Model ablation switches; the defaults give the full models."""

    interaction: str = "hamilton"  # or "dot_product"
    directionality: str = "two_way"  # or "one_way"
    pooling: str = "hamilton"  # or "elementwise_real"
    residual: bool = True

    def __post_init__(self):
        if self.interaction not in ("hamilton", "dot_product"):
            raise ValueError(f"unknown interaction {self.interaction!r}")
        if self.directionality not in ("two_way", "one_way"):
            raise ValueError(f"unknown directionality {self.directionality!r}")
        if self.pooling not in ("hamilton", "elementwise_real"):
            raise ValueError(f"unknown pooling {self.pooling!r}")
        object.__setattr__(self, "residual", bool(self.residual))

    @property
    def two_way(self) -> bool:
        return self.directionality == "two_way"


DEFAULT_VARIANT = VariantConfig()


# ---------------------------------------------------------------------------
# Parameter containers


class Params:
    """Common behaviour of the parameter structures.

    Every trainable scalar lives in one of the arrays named by ``fields``;
    ``w0`` is a 0-d array so that all updates can be done in place.
    """

    kind: ClassVar[str]
    fields: ClassVar[tuple[str, ...]]

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.fields}

    def copy(self):
        return dataclasses.replace(self, **{k: v.copy() for k, v in self.arrays().items()})

    def zeros_like(self):
        return dataclasses.replace(self, **{k: np.zeros_like(v) for k, v in self.arrays().items()})

    @property
    def size(self) -> int:
        """Number of trainable scalars, counted by walking every array."""
        return sum(int(v.size) for v in self.arrays().values())

    @property
    def n(self) -> int:
        return len(self.w)

    def coordinates(self):
        """Yield ``(field, flat_index)`` for every trainable scalar."""
        for name, arr in self.arrays().items():
            for k in range(arr.size):
                yield name, k

    def get(self, coord) -> float:
        name, k = coord
        return float(getattr(self, name).reshape(-1)[k])

    def set(self, coord, value: float) -> None:
        name, k = coord
        getattr(self, name).reshape(-1)[k] = value


@dataclass
class FmParams(Params):
    w0: np.ndarray
    w: np.ndarray
    V: np.ndarray

    kind: ClassVar[str] = "fm"
    fields: ClassVar[tuple[str, ...]] = ("w0", "w", "V")

    @property
    def d(self) -> int:
        return self.V.shape[1]

    l = 0


@dataclass
class QfmParams(Params):
    w0: np.ndarray
    w: np.ndarray
    M: np.ndarray  # (4, n, d): stacked Mr, Ma, Mb, Mc

    kind: ClassVar[str] = "qfm"
    fields: ClassVar[tuple[str, ...]] = ("w0", "w", "M")

    @property
    def d(self) -> int:
        return self.M.shape[2]

    l = 0

    Mr = property(lambda self: self.M[0])
    Ma = property(lambda self: self.M[1])
    Mb = property(lambda self: self.M[2])
    Mc = property(lambda self: self.M[3])


@dataclass
class QnfmParams(Params):
    w0: np.ndarray
    w: np.ndarray
    M: np.ndarray  # (4, n, d)
    W: np.ndarray  # (l, 4, d, d) quaternion weight per layer
    b: np.ndarray  # (l, 4, d) quaternion bias per layer
    p: np.ndarray  # (4, d) output projection

    kind: ClassVar[str] = "qnfm"
    fields: ClassVar[tuple[str, ...]] = ("w0", "w", "M", "W", "b", "p")

    @property
    def d(self) -> int:
        return self.M.shape[2]

    @property
    def l(self) -> int:  # noqa: E743
        return self.W.shape[0]

    Mr = property(lambda self: self.M[0])
    Ma = property(lambda self: self.M[1])
    Mb = property(lambda self: self.M[2])
    Mc = property(lambda self: self.M[3])


PARAM_TYPES = {"fm": FmParams, "qfm": QfmParams, "qnfm": QnfmParams}


def init_params(kind: str, n: int, d: int, l: int = 1, seed: int = 0, base_rate: float = 0.5):
    """Randomly initialised parameters.

    Quaternion cores are drawn from N(0, 1/(4d)); the FM baseline uses
    N(0, 1/d_fm) for its ``d``-dimensional embeddings. Linear weights and
    biases start at zero and ``w0`` at the logit of ``base_rate``.
    """
    if kind not in PARAM_TYPES:
        raise ValueError(f"unknown model kind {kind!r}")
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    rng = np.random.default_rng(seed)
    rate = min(max(base_rate, 1e-6), 1 - 1e-6)
    w0 = np.array(np.log(rate / (1 - rate)))
    w = np.zeros(n)
    if kind == "fm":
        return FmParams(w0, w, rng.normal(0.0, 1 / np.sqrt(d), size=(n, d)))
    scale = 1 / np.sqrt(4 * d)
    M = rng.normal(0.0, scale, size=(4, n, d))
    if kind == "qfm":
        return QfmParams(w0, w, M)
    if l < 1:
        raise ValueError("QNFM needs l >= 1")
    W = rng.normal(0.0, scale, size=(l, 4, d, d))
    b = np.zeros((l, 4, d))
    p = rng.normal(0.0, scale, size=(4, d))
    return QnfmParams(w0, w, M, W, b, p)


def param_skeleton(kind: str, n: int, d: int, l: int = 1) -> Params:
    """Parameter structure backed by zero-stride arrays (no memory per scalar).

    Useful for counting parameters of large models.
    """
    cls = PARAM_TYPES[kind]
    shapes = {"w0": (), "w": (n,)}
    if kind == "fm":
        shapes["V"] = (n, d)
    else:
        shapes["M"] = (4, n, d)
    if kind == "qnfm":
        shapes.update(W=(l, 4, d, d), b=(l, 4, d), p=(4, d))
    return cls(**{k: np.broadcast_to(0.0, shape) for k, shape in shapes.items()})


def param_count(kind: str, n: int, d: int, l: int = 1) -> int:
    """Trainable-scalar count from the closed-form space-complexity formulas.

    For ``"fm"`` the ``d`` argument is the real embedding size ``d_fm``.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    if kind == "fm":
        return 1 + n + n * d
    if kind == "qfm":
        return 1 + n + 4 * n * d
    if kind == "qnfm":
        if l < 1:
            raise ValueError("QNFM needs l >= 1")
        return 1 + n + 4 * n * d + l * (4 * d * d + 4 * d) + 4 * d
    raise ValueError(f"unknown model kind {kind!r}")


def real_ffn_layer_count(d: int) -> int:
    """Scalars in a real dense layer of width 4d (weights plus bias)."""
    return 16 * d * d + 4 * d


# ---------------------------------------------------------------------------
# Pairwise pooling shared by QFM and QNFM


def _channel(u, v):
    return u * v


PRODUCTS = {"hamilton": lambda u, v: qt._hamilton(u, v, np.multiply), "channel": _channel}


def pair_pool(E: np.ndarray, product: str, two_way: bool) -> np.ndarray:
    """Sum of element-wise pair products over the slot axis.

    ``E`` has shape ``(4, B, F, d)``. Returns ``(4, B, d)``:
    ``sum_{i<j} prod(E_i, E_j) [+ prod(E_j, E_i)]``. Summing the result over
    the last axis turns element-wise products into inner products.
    """
    prod = PRODUCTS[product]
    if two_way:
        S = E.sum(axis=2)
        return prod(S, S) - prod(E, E).sum(axis=2)
    prefix = np.cumsum(E, axis=2) - E
    return prod(prefix, E).sum(axis=2)


def batch_embed(M: np.ndarray, batch: Batch) -> np.ndarray:
    """Value-weighted embedding rows, shape ``(4, B, F, d)``."""
    return M[:, batch.indices] * batch.values[None, :, :, None]


def linear_term(params: Params, batch: Batch) -> np.ndarray:
    return params.w0 + np.sum(params.w[batch.indices] * batch.values, axis=1)


def _check_batch(params: Params, batch: Batch) -> None:
    if batch.indices.size and batch.indices.max() >= params.n:
        raise IndexError(f"feature index {batch.indices.max()} out of range for n={params.n}")


# ---------------------------------------------------------------------------
# Batched forward passes


def fm_scores(params: FmParams, batch: Batch, cache: dict | None = None) -> np.ndarray:
    _check_batch(params, batch)
    E = params.V[batch.indices] * batch.values[..., None]
    S = E.sum(axis=1)
    pair = 0.5 * (np.sum(S * S, axis=1) - np.sum(E * E, axis=(1, 2)))
    if cache is not None:
        cache.update(E=E, S=S)
    return linear_term(params, batch) + pair


def qfm_scores(params: QfmParams, batch: Batch, variant: VariantConfig = DEFAULT_VARIANT, cache=None):
    _check_batch(params, batch)
    E = batch_embed(params.M, batch)
    product = "hamilton" if variant.interaction == "hamilton" else "channel"
    h = pair_pool(E, product, variant.two_way).sum(axis=-1)
    if cache is not None:
        cache.update(E=E, product=product)
    return linear_term(params, batch) + qt.map_to_real(h)


def dropout_masks(rng: np.random.Generator, l: int, B: int, d: int, rho: float) -> np.ndarray:
    """Inverted-dropout masks, one Bernoulli per quaternion coordinate.

    Shape ``(l, B, d)``; kept coordinates are scaled by ``1/(1-rho)``.
    """
    if rho == 0.0:
        return np.ones((l, B, d))
    keep = rng.random((l, B, d)) >= rho
    return keep / (1.0 - rho)


def ffn_forward(params: QnfmParams, v: np.ndarray, variant: VariantConfig, masks=None, cache=None):
    """Residual quaternion feed-forward stack on ``v`` of shape ``(4, B, d)``."""
    h = v
    layers = []
    for k in range(params.l):
        z = qt.qmat_vec(params.W[k], h) + params.b[k][:, None, :]
        a = np.maximum(z, 0.0)
        out = h + a if variant.residual else a
        if masks is not None:
            out = out * masks[k][None]
        layers.append((h, z))
        h = out
    if cache is not None:
        cache["layers"] = layers
    return h


def qnfm_scores(
    params: QnfmParams,
    batch: Batch,
    variant: VariantConfig = DEFAULT_VARIANT,
    train: bool = False,
    rho: float = 0.0,
    rng: np.random.Generator | None = None,
    cache: dict | None = None,
):
    _check_batch(params, batch)
    E = batch_embed(params.M, batch)
    product = "hamilton" if variant.pooling == "hamilton" else "channel"
    v = pair_pool(E, product, variant.two_way)
    masks = None
    if train and rho > 0.0:
        if rng is None:
            raise ValueError("train mode with dropout needs an rng for the masks")
        masks = dropout_masks(rng, params.l, len(batch), params.d, rho)
    h = ffn_forward(params, v, variant, masks, cache)
    out = qt.inner_hamilton_product(params.p[:, None, :], h)
    if cache is not None:
        cache.update(E=E, product=product, masks=masks, h=h)
    return linear_term(params, batch) + qt.map_to_real(out)


def scores(params: Params, batch: Batch, variant: VariantConfig = DEFAULT_VARIANT, **kw) -> np.ndarray:
    """Eval-mode (or train-mode, for QNFM) logits for a whole batch."""
    if isinstance(params, FmParams):
        return fm_scores(params, batch, kw.get("cache"))
    if isinstance(params, QfmParams):
        return qfm_scores(params, batch, variant, kw.get("cache"))
    return qnfm_scores(params, batch, variant, **kw)


def predict(params: Params, batch: Batch, variant: VariantConfig = DEFAULT_VARIANT) -> np.ndarray:
    """Eval-mode click probabilities."""
    from .data import sigmoid

    return sigmoid(scores(params, batch, variant))


# ---------------------------------------------------------------------------
# Single-instance reference API


def embed(params: QfmParams | QnfmParams, instance: SparseInstance) -> list[np.ndarray]:
    """Quaternion embeddings ``(4, d)`` of the nonzero features of ``instance``."""
    out = []
    for i, x in zip(instance.indices, instance.values):
        if i >= params.n:
            raise IndexError(f"feature index {i} out of range for n={params.n}")
        out.append(x * params.M[:, i, :])
    return out


def fm_forward(params: FmParams, instance: SparseInstance) -> float:
    return float(fm_scores(params, Batch.single(instance))[0])


def _pair_products(embeddings, product, variant: VariantConfig):
    total = None
    for i in range(len(embeddings)):
        for j in range(i + 1, len(embeddings)):
            term = product(embeddings[i], embeddings[j])
            if variant.two_way:
                term = term + product(embeddings[j], embeddings[i])
            total = term if total is None else total + term
    return total


def _check_dims(embeddings) -> int | None:
    dims = {np.shape(e) for e in embeddings}
    if len(dims) > 1:
        raise qt.ShapeError(f"embeddings differ in shape: {sorted(dims)}")
    return dims.pop()[-1] if dims else None


def qfm_interaction(embeddings, variant: VariantConfig = DEFAULT_VARIANT) -> np.ndarray:
    """Pairwise interaction quaternion, evaluated pair by pair."""
    _check_dims(embeddings)
    if variant.interaction == "hamilton":
        product = qt.inner_hamilton_product
    else:
        product = qt.channel_dot_product
    total = _pair_products(embeddings, product, variant)
    return np.zeros(4) if total is None else total


def qfm_interaction_fast(embeddings) -> np.ndarray:
    """Two-way Hamilton interaction via ``S (x) S - sum_i v_i (x) v_i``."""
    _check_dims(embeddings)
    if len(embeddings) == 0:
        return np.zeros(4)
    E = np.stack(embeddings, axis=1)  # (4, F, d)
    S = E.sum(axis=1)
    return qt.inner_hamilton_product(S, S) - qt.inner_hamilton_product(E, E).sum(axis=1)


def qfm_forward(params: QfmParams, instance: SparseInstance, variant: VariantConfig = DEFAULT_VARIANT) -> float:
    lin = params.w0 + sum(params.w[i] * x for i, x in zip(instance.indices, instance.values))
    h = qfm_interaction(embed(params, instance), variant)
    return float(lin + qt.map_to_real(h))


def qnfm_pooling(embeddings, variant: VariantConfig = DEFAULT_VARIANT, fast: bool = False) -> np.ndarray:
    """Interaction pooling of quaternion embeddings into one ``(4, d)`` vector.

    ``fast=True`` uses the bilinear identity and is only valid for two-way
    Hamilton pooling.
    """
    d = _check_dims(embeddings)
    if d is None:
        raise ValueError("pooling an empty embedding list needs a known dimension")
    if fast:
        if not (variant.two_way and variant.pooling == "hamilton"):
            raise ValueError("fast pooling path only covers two-way Hamilton pooling")
        E = np.stack(embeddings, axis=1)
        S = E.sum(axis=1)
        return qt.elementwise_hamilton_product(S, S) - qt.elementwise_hamilton_product(E, E).sum(axis=1)
    if variant.pooling == "hamilton":
        product = qt.elementwise_hamilton_product
    else:
        product = qt.channel_elementwise_product
    total = _pair_products(embeddings, product, variant)
    return np.zeros((4, d)) if total is None else total


def qnfm_ffn(params: QnfmParams, v: np.ndarray, variant: VariantConfig = DEFAULT_VARIANT, masks=None) -> np.ndarray:
    """Feed-forward stack on a single pooled vector ``(4, d)``.

    ``masks`` (shape ``(l, d)``, already inverted-scaled) switches on
    train-mode dropout; ``None`` is eval mode.
    """
    v = qt.as_quaternion(v)
    if v.shape != (4, params.d):
        raise qt.ShapeError(f"expected pooled vector of shape (4, {params.d}), got {v.shape}")
    if masks is not None:
        masks = np.asarray(masks)[:, None, :]
    return ffn_forward(params, v[:, None, :], variant, masks)[:, 0, :]


def qnfm_forward(
    params: QnfmParams,
    instance: SparseInstance,
    variant: VariantConfig = DEFAULT_VARIANT,
    mode: str = "eval",
    rho: float = 0.0,
    rng: np.random.Generator | None = None,
) -> float:
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    out = qnfm_scores(params, Batch.single(instance), variant, mode == "train", rho, rng)
    return float(out[0])


def forward(params: Params, instance: SparseInstance, variant: VariantConfig = DEFAULT_VARIANT) -> float:
    """Eval-mode output of any model kind on one instance."""
    return float(scores(params, Batch.single(instance), variant)[0])


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(path: str | Path, params: Params, variant: VariantConfig = DEFAULT_VARIANT) -> None:
    """Write ``params`` to an ``.npz`` archive.

    Layout: scalar entries ``kind``, ``n``, ``d``, ``l``, ``interaction``,
    ``directionality``, ``pooling``, ``residual`` followed by one float64
    array per parameter field (``w0``, ``w``, then ``V`` or ``M`` and, for
    QNFM, ``W``, ``b``, ``p``). Quaternion arrays keep cores on the leading
    axis in (r, a, b, c) order.
    """
    meta = {
        "kind": np.array(params.kind),
        "n": np.array(params.n),
        "d": np.array(params.d),
        "l": np.array(params.l),
        "interaction": np.array(variant.interaction),
        "directionality": np.array(variant.directionality),
        "pooling": np.array(variant.pooling),
        "residual": np.array(variant.residual),
    }
    with open(path, "wb") as fh:
        np.savez(fh, **meta, **params.arrays())


def load_checkpoint(path: str | Path) -> tuple[Params, VariantConfig]:
    with np.load(path, allow_pickle=False) as z:
        kind = str(z["kind"])
        cls = PARAM_TYPES[kind]
        params = cls(**{name: np.array(z[name], dtype=np.float64) for name in cls.fields})
        variant = VariantConfig(
            str(z["interaction"]), str(z["directionality"]), str(z["pooling"]), bool(z["residual"])
        )
    return params, variant
