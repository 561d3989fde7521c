"""Differentiable primitives.

Every function computes its forward value with numpy, refuses non-finite
results, and records a backward closure on the active compute graph when any
input requires gradients.
"""

from typing import Sequence

import numpy as np

from adaprompt.diffcore.graph import current_graph
from adaprompt.diffcore.tensor import Tensor, as_tensor
from adaprompt.errors import ContractError, NumericError, ShapeError, TokenIndexError


def _finish(op: str, inputs: Sequence[Tensor], out_data: np.ndarray, backward_fn) -> Tensor:
    if not np.all(np.isfinite(out_data)):
        raise NumericError(f"{op} produced a non-finite value")
    out = Tensor(out_data)
    graph = current_graph()
    if graph is not None and any(t.requires_grad for t in inputs):
        graph.record(op, inputs, out, backward_fn)
    return out


def _require_finite(op: str, x: Tensor) -> None:
    if not np.all(np.isfinite(x.data)):
        raise NumericError(f"{op} received a non-finite input")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# Elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _finish("add", (a, b), a.data + b.data, backward_fn)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward_fn(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return _finish("sub", (a, b), a.data - b.data, backward_fn)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward_fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _finish("mul", (a, b), a.data * b.data, backward_fn)


def scale(a: Tensor, factor: float) -> Tensor:
    def backward_fn(g):
        return (g * factor,)

    return _finish("scale", (a,), a.data * factor, backward_fn)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def backward_fn(g):
        return (g * (1.0 - y * y),)

    return _finish("tanh", (x,), y, backward_fn)


def sigmoid(x: Tensor) -> Tensor:
    # tanh form never overflows
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))

    def backward_fn(g):
        return (g * y * (1.0 - y),)

    return _finish("sigmoid", (x,), y, backward_fn)


_GELU_C = float(np.sqrt(2.0 / np.pi))


def gelu(x: Tensor) -> Tensor:
    """Tanh-approximated GELU."""
    inner = _GELU_C * (x.data + 0.044715 * x.data**3)
    t = np.tanh(inner)

    def backward_fn(g):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x.data**2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t * t) * d_inner),)

    return _finish("gelu", (x,), 0.5 * x.data * (1.0 + t), backward_fn)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, train_mode: bool) -> Tensor:
    """Inverted dropout; the identity in eval mode."""
    if not train_mode or rate == 0.0:
        return x
    if rng is None:
        raise ContractError("dropout in train mode needs a random generator")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, Tensor(keep))


# Linear algebra and shape


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul cannot combine {a.shape} and {b.shape}")

    def backward_fn(g):
        return g @ b.data.T, a.data.T @ g

    return _finish("matmul", (a, b), a.data @ b.data, backward_fn)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got {a.shape}")

    def backward_fn(g):
        return (g.T,)

    return _finish("transpose", (a,), a.data.T.copy(), backward_fn)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat along axis {axis}: {e}") from e

    def backward_fn(g):
        return np.split(g, offsets, axis=axis)

    return _finish("concat", tensors, out, backward_fn)


def slice_(a: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    """Contiguous slice ``[start, stop)`` along ``axis``."""
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def backward_fn(g):
        grad = np.zeros_like(a.data)
        grad[index] = g
        return (grad,)

    return _finish("slice", (a,), a.data[index].copy(), backward_fn)


def take(a: Tensor, indices: Sequence[int], axis: int = 0) -> Tensor:
    """Select entries along ``axis``; gradients scatter-add back."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[axis]):
        raise TokenIndexError(f"index out of range for axis {axis} of size {a.shape[axis]}")

    def backward_fn(g):
        grad = np.zeros_like(a.data)
        np.add.at(np.moveaxis(grad, axis, 0), idx, np.moveaxis(g, axis, 0))
        return (grad,)

    return _finish("take", (a,), np.take(a.data, idx, axis=axis), backward_fn)


def gather(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Embedding row lookup: row j of the result is ``table[ids[j]]``."""
    return take(table, ids, axis=0)


# Reductions


def _expand_reduced(g: np.ndarray, shape, axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape).copy()


def sum_(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    def backward_fn(g):
        return (_expand_reduced(g, a.shape, axis, keepdims),)

    return _finish("sum", (a,), np.sum(a.data, axis=axis, keepdims=keepdims), backward_fn)


def mean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = a.size if axis is None else a.shape[axis]

    def backward_fn(g):
        return (_expand_reduced(g, a.shape, axis, keepdims) / count,)

    return _finish("mean", (a,), np.mean(a.data, axis=axis, keepdims=keepdims), backward_fn)


def average(tensors: Sequence[Tensor]) -> Tensor:
    """Mean of equally shaped tensors (used for batch losses)."""
    if not tensors:
        raise ShapeError("average needs at least one tensor")
    n = len(tensors)
    out = tensors[0].data.copy()
    for t in tensors[1:]:
        out = out + t.data

    def backward_fn(g):
        share = g / n
        return [share] * n

    return _finish("average", tensors, out / n, backward_fn)


# Normalisation and probabilities


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then apply ``gain`` and ``bias``."""
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    rstd = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * rstd

    def backward_fn(g):
        dxhat = g * gain.data
        dx = rstd * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, _unbroadcast(g * xhat, gain.shape), _unbroadcast(g, bias.shape)

    return _finish("layer_norm", (x, gain, bias), xhat * gain.data + bias.data, backward_fn)


def softmax(logits: Tensor, axis: int = -1) -> Tensor:
    _require_finite("softmax", logits)
    shifted = logits.data - logits.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _finish("softmax", (logits,), y, backward_fn)


def log_softmax(logits: Tensor, axis: int = -1) -> Tensor:
    _require_finite("log_softmax", logits)
    shifted = logits.data - logits.data.max(axis=axis, keepdims=True)
    y = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward_fn(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return _finish("log_softmax", (logits,), y, backward_fn)


def cross_entropy_from_logits(logits: Tensor, target) -> Tensor:
    """Negative log-likelihood of ``target`` under ``softmax(logits)``.

    A vector of length L takes one integer target. An (R, L) matrix takes R
    targets and returns the mean over rows.
    """
    _require_finite("cross_entropy", logits)
    rows = logits.data.reshape(1, -1) if logits.data.ndim == 1 else logits.data
    targets = np.atleast_1d(np.asarray(target, dtype=np.int64))
    n_rows, width = rows.shape
    if targets.shape != (n_rows,):
        raise ShapeError(f"{n_rows} logit rows but {targets.size} targets")
    if targets.min() < 0 or targets.max() >= width:
        raise TokenIndexError(f"target outside [0, {width})")

    shifted = rows - rows.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    picked = log_probs[np.arange(n_rows), targets]
    loss = np.asarray(-picked.mean())

    def backward_fn(g):
        grad = np.exp(log_probs)
        grad[np.arange(n_rows), targets] -= 1.0
        return ((grad * (g / n_rows)).reshape(logits.shape),)

    return _finish("cross_entropy", (logits,), loss, backward_fn)
