"""Quaternion algebra kernels.

Quaternions are stored as float64 numpy arrays whose *leading* axis holds
the four cores in ``(r, a, b, c)`` order:

* a quaternion scalar has shape ``(4,)``
* a quaternion vector of dimension ``d`` has shape ``(4, d)``
* a quaternion matrix ``d_out x d_in`` has shape ``(4, d_out, d_in)``

Any extra axes between the core axis and the trailing axis are treated as
batch axes, so the same kernels serve single instances and mini-batches.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

CORES = ("r", "a", "b", "c")


class ShapeError(ValueError):
    """Raised when quaternion operands have incompatible shapes."""


def as_quaternion(values) -> np.ndarray:
    """Coerce ``values`` to a core-leading float64 array and check it."""
    q = np.asarray(values, dtype=np.float64)
    if q.ndim == 0 or q.shape[0] != 4:
        raise ShapeError(f"expected leading core axis of length 4, got shape {q.shape}")
    return q


def quaternion(r: float, a: float, b: float, c: float) -> np.ndarray:
    return np.array([r, a, b, c], dtype=np.float64)


def qvector(r, a, b, c) -> np.ndarray:
    """Stack four equal-length core vectors into a quaternion vector."""
    cores = [np.asarray(x, dtype=np.float64) for x in (r, a, b, c)]
    shapes = {x.shape for x in cores}
    if len(shapes) != 1:
        raise ShapeError(f"core vectors differ in shape: {sorted(shapes)}")
    return np.stack(cores)


def _check_same(u: np.ndarray, v: np.ndarray) -> None:
    if u.shape[0] != 4 or v.shape[0] != 4:
        raise ShapeError("operands need a leading core axis of length 4")
    if u.shape[-1] != v.shape[-1]:
        raise ShapeError(f"dimension mismatch: {u.shape} vs {v.shape}")


def _hamilton(p, q, mul: Callable) -> np.ndarray:
    # Sign pattern of the Hamilton product with a pluggable core product.
    pr, pa, pb, pc = p
    qr, qa, qb, qc = q
    return np.stack(
        [
            mul(pr, qr) - mul(pa, qa) - mul(pb, qb) - mul(pc, qc),
            mul(pr, qa) + mul(pa, qr) + mul(pb, qc) - mul(pc, qb),
            mul(pr, qb) - mul(pa, qc) + mul(pb, qr) + mul(pc, qa),
            mul(pr, qc) + mul(pa, qb) - mul(pb, qa) + mul(pc, qr),
        ]
    )


def _hamilton_adjoint_left(g, q, mul: Callable) -> np.ndarray:
    """Gradient w.r.t. the left operand given upstream ``g`` on the output."""
    gr, ga, gb, gc = g
    qr, qa, qb, qc = q
    return np.stack(
        [
            mul(gr, qr) + mul(ga, qa) + mul(gb, qb) + mul(gc, qc),
            -mul(gr, qa) + mul(ga, qr) - mul(gb, qc) + mul(gc, qb),
            -mul(gr, qb) + mul(ga, qc) + mul(gb, qr) - mul(gc, qa),
            -mul(gr, qc) - mul(ga, qb) + mul(gb, qa) + mul(gc, qr),
        ]
    )


def _hamilton_adjoint_right(p, g, mul: Callable) -> np.ndarray:
    """Gradient w.r.t. the right operand given upstream ``g`` on the output.

    ``mul(p_core, g_core)`` must return something shaped like a right-operand
    core.
    """
    pr, pa, pb, pc = p
    gr, ga, gb, gc = g
    return np.stack(
        [
            mul(pr, gr) + mul(pa, ga) + mul(pb, gb) + mul(pc, gc),
            -mul(pa, gr) + mul(pr, ga) + mul(pc, gb) - mul(pb, gc),
            -mul(pb, gr) - mul(pc, ga) + mul(pr, gb) + mul(pa, gc),
            -mul(pc, gr) + mul(pb, ga) - mul(pa, gb) + mul(pr, gc),
        ]
    )


def _dot(x, y):
    return np.sum(x * y, axis=-1)


def hamilton_product(q1, q2) -> np.ndarray:
    """Hamilton product ``q1 x q2`` of two quaternions.

    Broadcasts over any trailing axes, which makes it the element-wise
    product as well when given quaternion vectors.

    >>> hamilton_product([0, 1, 0, 0], [0, 0, 1, 0])
    array([0., 0., 0., 1.])
    """
    p = as_quaternion(q1)
    q = as_quaternion(q2)
    return _hamilton(p, q, np.multiply)


def norm(q) -> float | np.ndarray:
    q = as_quaternion(q)
    return np.sqrt(np.sum(q * q, axis=0))


def normalize(q) -> np.ndarray:
    """Scale ``q`` to a unit quaternion.

    Raises
    ------
    ZeroDivisionError
        If ``q`` is the zero quaternion; normalization is undefined there.
    """
    q = as_quaternion(q)
    if q.ndim != 1:
        raise ShapeError("normalize expects a single quaternion of shape (4,)")
    size = float(np.sqrt(np.dot(q, q)))
    if size == 0.0:
        raise ZeroDivisionError("cannot normalize the zero quaternion")
    return q / size


def inner_hamilton_product(u, v) -> np.ndarray:
    """Inner Hamilton product of two quaternion vectors.

    Every pair of cores meets through a real dot product over the last
    axis, so the result is a quaternion scalar (batch axes preserved).
    """
    u = as_quaternion(u)
    v = as_quaternion(v)
    _check_same(u, v)
    return _hamilton(u, v, _dot)


def elementwise_hamilton_product(u, v) -> np.ndarray:
    """Coordinate-wise Hamilton product of two quaternion vectors."""
    u = as_quaternion(u)
    v = as_quaternion(v)
    _check_same(u, v)
    return _hamilton(u, v, np.multiply)


def channel_dot_product(u, v) -> np.ndarray:
    """Same-channel dot products ``r.r + (a.a)I + (b.b)J + (c.c)K``."""
    u = as_quaternion(u)
    v = as_quaternion(v)
    _check_same(u, v)
    return np.sum(u * v, axis=-1)


def channel_elementwise_product(u, v) -> np.ndarray:
    """Same-channel element-wise products ``r*r + (a*a)I + (b*b)J + (c*c)K``."""
    u = as_quaternion(u)
    v = as_quaternion(v)
    _check_same(u, v)
    return u * v


def map_to_real(q) -> float | np.ndarray:
    """Average the four cores."""
    q = as_quaternion(q)
    return (q[0] + q[1] + q[2] + q[3]) / 4.0


def _matvec(w, h):
    # w: (d_out, d_in); h: (..., d_in)
    return h @ w.T


def qmat_vec(W, h) -> np.ndarray:
    """Apply a quaternion matrix to a quaternion vector (or a batch of them).

    ``W`` has shape ``(4, d_out, d_in)``; ``h`` has shape ``(4, ..., d_in)``.
    """
    W = as_quaternion(W)
    h = as_quaternion(h)
    if W.ndim != 3:
        raise ShapeError(f"quaternion matrix must have shape (4, d_out, d_in), got {W.shape}")
    if W.shape[-1] != h.shape[-1]:
        raise ShapeError(f"matrix columns {W.shape[-1]} != vector dimension {h.shape[-1]}")
    return _hamilton(W, h, _matvec)


def qmat_real_block(W) -> np.ndarray:
    """Expand a quaternion matrix to its equivalent real block matrix.

    The result maps a stacked real vector ``[r; a; b; c]`` (length ``4*d_in``)
    to ``[r; a; b; c]`` of length ``4*d_out``.
    """
    W = as_quaternion(W)
    R, A, B, C = W
    return np.block(
        [
            [R, -A, -B, -C],
            [A, R, -C, B],
            [B, C, R, -A],
            [C, -B, A, R],
        ]
    )


def split_relu(h) -> np.ndarray:
    """ReLU applied independently to every core."""
    h = as_quaternion(h)
    return np.maximum(h, 0.0)


def qvec_add(u, v) -> np.ndarray:
    u = as_quaternion(u)
    v = as_quaternion(v)
    if u.shape != v.shape:
        raise ShapeError(f"shape mismatch: {u.shape} vs {v.shape}")
    return u + v


def qvec_scale(alpha: float, u) -> np.ndarray:
    return float(alpha) * as_quaternion(u)


# Adjoints used by the hand-written backward passes.


def hamilton_grads(p, q, g) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``<g, p x q>`` w.r.t. ``p`` and ``q`` (element-wise)."""
    return (
        _hamilton_adjoint_left(g, q, np.multiply),
        _hamilton_adjoint_right(p, g, np.multiply),
    )


def inner_hamilton_grads(u, v, g) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``<g, u (x) v>`` for a quaternion-scalar upstream ``g``.

    ``g`` has shape ``(4, ...)`` matching the output batch axes; it is
    broadcast across the vector dimension.
    """
    g = np.asarray(g)[..., None]
    return (
        _hamilton_adjoint_left(g, v, np.multiply),
        _hamilton_adjoint_right(u, g, np.multiply),
    )


def qmat_vec_grads(W, h, g) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``<g, W x h>`` w.r.t. ``W`` and ``h``.

    ``h`` and ``g`` may carry one batch axis: shapes ``(4, B, d_in)`` and
    ``(4, B, d_out)``. The weight gradient is summed over the batch.
    """
    if h.ndim == 2:
        outer = lambda gk, hk: np.multiply.outer(gk, hk)  # noqa: E731
    else:
        outer = lambda gk, hk: gk.T @ hk  # noqa: E731
    dW = _hamilton_adjoint_left(g, h, outer)
    dh = _hamilton_adjoint_right(W, g, lambda wk, gk: gk @ wk)
    return dW, dh
