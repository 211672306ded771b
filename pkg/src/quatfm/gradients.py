"""Hand-derived reverse-mode gradients and a finite-difference oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import quaternion as qt
from .data import Batch, SparseInstance
from .models import (
    DEFAULT_VARIANT,
    FmParams,
    Params,
    QfmParams,
    QnfmParams,
    VariantConfig,
    fm_scores,
    qfm_scores,
    qnfm_scores,
    scores,
)


@dataclass
class GradientBuffer:
    """Parameter-shaped gradient accumulator plus the instance count."""

    grads: Params
    count: int = 0

    @classmethod
    def zeros(cls, params: Params) -> "GradientBuffer":
        return cls(params.zeros_like(), 0)

    def add(self, other: "GradientBuffer") -> "GradientBuffer":
        for name, arr in self.grads.arrays().items():
            arr += getattr(other.grads, name)
        self.count += other.count
        return self

    def mean(self) -> Params:
        if self.count == 0:
            return self.grads.copy()
        out = self.grads.copy()
        for arr in out.arrays().values():
            arr /= self.count
        return out

    def arrays(self) -> dict[str, np.ndarray]:
        return self.grads.arrays()


def _pool_backward(E: np.ndarray, product: str, two_way: bool, G: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`quatfm.models.pair_pool`.

    ``G`` is the upstream on the pooled ``(4, B, d)`` output, or anything
    broadcastable to it. Returns the gradient w.r.t. ``E`` ``(4, B, F, d)``.
    """
    G = np.broadcast_to(G, (4, E.shape[1], E.shape[3]))
    Gf = G[:, :, None, :]
    if product == "hamilton":
        left = lambda g, q: qt._hamilton_adjoint_left(g, q, np.multiply)  # noqa: E731
        right = lambda p, g: qt._hamilton_adjoint_right(p, g, np.multiply)  # noqa: E731
    else:
        left = lambda g, q: g * q  # noqa: E731
        right = lambda p, g: p * g  # noqa: E731
    if two_way:
        S = E.sum(axis=2)
        dS = left(G, S) + right(S, G)
        return dS[:, :, None, :] - (left(Gf, E) + right(E, Gf))
    prefix = np.cumsum(E, axis=2) - E
    dprefix = left(Gf, E)
    dE = right(prefix, Gf)
    # prefix_f = sum_{i<f} E_i, so E_i collects dprefix_f for every f > i.
    after = np.cumsum(dprefix[:, :, ::-1], axis=2)[:, :, ::-1] - dprefix
    return dE + after


def _scatter_embeddings(shape, batch: Batch, dE: np.ndarray) -> np.ndarray:
    """Accumulate slot gradients ``(4, B, F, d)`` into an ``(4, n, d)`` table."""
    out = np.zeros(shape)
    weighted = dE * batch.values[None, :, :, None]
    flat_idx = batch.indices.reshape(-1)
    for k in range(4):
        np.add.at(out[k], flat_idx, weighted[k].reshape(len(flat_idx), -1))
    return out


def _linear_grads(grads: Params, batch: Batch, upstream: np.ndarray) -> None:
    grads.w0[...] = upstream.sum()
    np.add.at(grads.w, batch.indices.reshape(-1), (batch.values * upstream[:, None]).reshape(-1))


def _resolve(upstream, y: np.ndarray) -> np.ndarray:
    if callable(upstream):
        upstream = upstream(y)
    return np.broadcast_to(np.asarray(upstream, dtype=np.float64), y.shape)


def forward_backward(
    params: Params,
    batch: Batch,
    upstream,
    variant: VariantConfig = DEFAULT_VARIANT,
    train: bool = False,
    rho: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, Params]:
    """Scores for ``batch`` and gradients of ``sum_b upstream[b] * y_b``.

    ``upstream`` is ``dL/dy`` per instance (scalar or shape ``(B,)``), or a
    callable mapping the scores to it. In train mode QNFM draws its dropout
    masks from ``rng``; reusing an rng in the same state replays the same
    masks.
    """
    cache: dict = {}
    grads = params.zeros_like()
    if isinstance(params, FmParams):
        y = fm_scores(params, batch, cache)
        upstream = _resolve(upstream, y)
        E, S = cache["E"], cache["S"]
        dE = upstream[:, None, None] * (S[:, None, :] - E)
        dV = np.zeros_like(params.V)
        np.add.at(dV, batch.indices.reshape(-1), (dE * batch.values[..., None]).reshape(-1, params.d))
        grads.V[...] = dV
    elif isinstance(params, QfmParams):
        y = qfm_scores(params, batch, variant, cache)
        upstream = _resolve(upstream, y)
        G = np.broadcast_to(upstream[None, :, None] / 4.0, (4, len(batch), params.d))
        dE = _pool_backward(cache["E"], cache["product"], variant.two_way, G)
        grads.M[...] = _scatter_embeddings(params.M.shape, batch, dE)
    elif isinstance(params, QnfmParams):
        y = qnfm_scores(params, batch, variant, train, rho, rng, cache)
        upstream = _resolve(upstream, y)
        _qnfm_backward(params, batch, variant, cache, upstream, grads)
    else:
        raise TypeError(f"unsupported parameter type {type(params).__name__}")
    _linear_grads(grads, batch, upstream)
    return y, grads


def _qnfm_backward(params: QnfmParams, batch, variant, cache, upstream, grads: QnfmParams) -> None:
    h = cache["h"]
    G = np.broadcast_to(upstream[None, :] / 4.0, (4, len(batch)))
    dp, dh = qt.inner_hamilton_grads(params.p[:, None, :], h, G)
    grads.p[...] = dp.sum(axis=1)
    masks = cache["masks"]
    for k in reversed(range(params.l)):
        h_prev, z = cache["layers"][k]
        if masks is not None:
            dh = dh * masks[k][None]
        dz = dh * (z > 0.0)
        grads.b[k] = dz.sum(axis=1)
        dW, dh_branch = qt.qmat_vec_grads(params.W[k], h_prev, dz)
        grads.W[k] = dW
        dh = dh + dh_branch if variant.residual else dh_branch
    dE = _pool_backward(cache["E"], cache["product"], variant.two_way, dh)
    grads.M[...] = _scatter_embeddings(params.M.shape, batch, dE)


def backward(
    params: Params,
    instance: SparseInstance | Batch,
    upstream=1.0,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
    variant: VariantConfig = DEFAULT_VARIANT,
    rho: float = 0.0,
) -> GradientBuffer:
    """Gradient contribution of one instance (or a batch) scaled by ``upstream``.

    In train mode ``rng`` must be in the state the paired forward pass used,
    so the same dropout masks are replayed.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    batch = Batch.single(instance) if isinstance(instance, SparseInstance) else instance
    train = mode == "train"
    if train and rho > 0.0 and isinstance(params, QnfmParams) and rng is None:
        raise ValueError("train-mode backward needs the forward pass's rng to replay dropout masks")
    _, grads = forward_backward(params, batch, upstream, variant, train, rho, rng)
    return GradientBuffer(grads, len(batch))


def finite_difference_gradient(
    params: Params,
    instance: SparseInstance | Batch,
    coord: tuple[str, int],
    h: float = 1e-5,
    variant: VariantConfig = DEFAULT_VARIANT,
) -> float:
    """Central difference of the eval-mode output w.r.t. one coordinate."""
    if h <= 0:
        raise ValueError("step h must be positive")
    name, k = coord
    if name not in params.fields or not 0 <= k < getattr(params, name).size:
        raise IndexError(f"coordinate {coord} out of range")
    batch = Batch.single(instance) if isinstance(instance, SparseInstance) else instance
    probe = params.copy()
    base = probe.get(coord)
    probe.set(coord, base + h)
    up = scores(probe, batch, variant).sum()
    probe.set(coord, base - h)
    down = scores(probe, batch, variant).sum()
    return float((up - down) / (2 * h))


def relative_error(analytic: float, numeric: float) -> float:
    scale = max(abs(analytic), abs(numeric))
    return 0.0 if scale == 0.0 else abs(analytic - numeric) / scale


def gradient_errors(
    params: Params,
    instance: SparseInstance | Batch,
    variant: VariantConfig = DEFAULT_VARIANT,
    h: float = 1e-5,
    near_zero: float = 1e-6,
) -> dict[str, tuple[float, float]]:
    """Worst errors per parameter group: ``{field: (max_rel, max_abs_near_zero)}``.

    Relative error is used where the analytic partial is at least
    ``near_zero`` in magnitude, absolute error below that.
    """
    grads = backward(params, instance, 1.0, "eval", variant=variant).grads
    worst: dict[str, list[float]] = {}
    for coord in params.coordinates():
        a = grads.get(coord)
        f = finite_difference_gradient(params, instance, coord, h, variant)
        rel, ab = worst.setdefault(coord[0], [0.0, 0.0])
        if abs(a) < near_zero:
            worst[coord[0]][1] = max(ab, abs(a - f))
        else:
            worst[coord[0]][0] = max(rel, relative_error(a, f))
    return {k: (v[0], v[1]) for k, v in worst.items()}


def ffn_preactivations(params: QnfmParams, instance, variant: VariantConfig = DEFAULT_VARIANT) -> np.ndarray:
    """All eval-mode FFN pre-activation cores, used to steer clear of ReLU kinks."""
    batch = Batch.single(instance) if isinstance(instance, SparseInstance) else instance
    cache: dict = {}
    qnfm_scores(params, batch, variant, cache=cache)
    return np.concatenate([z.ravel() for _, z in cache["layers"]])


# ---------------------------------------------------------------------------
# Randomised gradient sweep


def random_case(
    kind: str,
    rng: np.random.Generator,
    n: int = 12,
    d: int = 4,
    l: int = 2,
    nnz: int = 5,
    variant: VariantConfig = DEFAULT_VARIANT,
    scale: float = 0.5,
    kink: float = 1e-3,
):
    """Random parameters and instance, redrawn until no FFN pre-activation
    core lies within ``kink`` of the ReLU corner."""
    from .models import init_params

    while True:
        params = init_params(kind, n, d, l)
        for arr in params.arrays().values():
            arr[...] = rng.normal(0.0, scale, size=arr.shape)
        idx = np.sort(rng.choice(n, size=nnz, replace=False))
        instance = SparseInstance(tuple(idx), tuple(rng.uniform(0.5, 1.5, size=nnz)), int(rng.integers(2)))
        if kind != "qnfm" or np.min(np.abs(ffn_preactivations(params, instance, variant))) >= kink:
            return params, instance


@dataclass
class SweepReport:
    worst_rel: dict[str, float]
    worst_abs: dict[str, float]
    cases: int
    rel_tol: float
    abs_tol: float

    @property
    def passed(self) -> bool:
        return all(v < self.rel_tol for v in self.worst_rel.values()) and all(
            v < self.abs_tol for v in self.worst_abs.values()
        )

    def lines(self) -> list[str]:
        out = []
        for group in self.worst_rel:
            rel, ab = self.worst_rel[group], self.worst_abs[group]
            ok = rel < self.rel_tol and ab < self.abs_tol
            out.append(f"{group}: max_rel={rel:.3e} max_abs_near_zero={ab:.3e} {'ok' if ok else 'FAIL'}")
        return out


def gradient_sweep(
    kind: str,
    cases: int = 20,
    seed: int = 0,
    variant: VariantConfig = DEFAULT_VARIANT,
    max_d: int = 8,
    max_l: int = 3,
    max_nnz: int = 8,
    h: float = 1e-5,
    rel_tol: float = 1e-4,
    abs_tol: float = 1e-7,
) -> SweepReport:
    """Compare analytic and central-difference partials over random cases."""
    rng = np.random.default_rng(seed)
    rel: dict[str, float] = {}
    ab: dict[str, float] = {}
    for _ in range(cases):
        d = int(rng.integers(1, max_d + 1))
        l = int(rng.integers(1, max_l + 1))
        nnz = int(rng.integers(2, max_nnz + 1))
        params, instance = random_case(kind, rng, n=max_nnz + 4, d=d, l=l, nnz=nnz, variant=variant)
        for group, (r, a) in gradient_errors(params, instance, variant, h).items():
            rel[group] = max(rel.get(group, 0.0), r)
            ab[group] = max(ab.get(group, 0.0), a)
    return SweepReport(rel, ab, cases, rel_tol, abs_tol)
