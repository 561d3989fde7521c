import logging
from typing import Callable, Sequence

import numpy as np

from adaprompt.diffcore.graph import ComputeGraph, backward
from adaprompt.diffcore.tensor import Tensor, get_dtype
from adaprompt.errors import ContractError, DeterminismError

logger = logging.getLogger(__name__)


def _evaluate(build_loss: Callable[[], Tensor]) -> float:
    return float(build_loss().data)


def grad_check(
    build_loss: Callable[[], Tensor],
    params: Sequence[Tensor],
    epsilon: float = 1e-4,
    floor: float = 1e-8,
) -> float:
    """Compare backward gradients against central finite differences.

    Args:
        build_loss: Zero-argument function that builds a scalar loss from ``params``.
            It is called inside a fresh graph once, then repeatedly without a graph.
        params: Tensors whose every coordinate is perturbed by +/- ``epsilon``.
        epsilon: Perturbation size.
        floor: Smallest denominator of the relative error. Coordinates with gradients
            below it are judged on absolute error over ``floor``, which keeps float64
            roundoff in near-zero gradients from dominating.

    Returns:
        float: max over coordinates of |a - b| / max(|a|, |b|, floor).
    """
    if get_dtype() is not np.float64:
        raise ContractError("grad_check requires float64 precision")
    if floor <= 0.0:
        raise ContractError(f"floor must be positive, got {floor}")

    with ComputeGraph() as graph:
        loss = build_loss()
    grads = backward(graph, loss)

    baseline = float(loss.data)
    repeat = _evaluate(build_loss)
    if repeat != baseline or _evaluate(build_loss) != baseline:
        raise DeterminismError(f"loss changed between evaluations: {baseline!r} vs {repeat!r}")

    worst = 0.0
    for param in params:
        analytic = graph.gradient(grads, param).data.reshape(-1)
        flat = param.data.reshape(-1)
        if not np.shares_memory(flat, param.data):
            raise ContractError(f"parameter {param.name!r} is not contiguous")
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + epsilon
            plus = _evaluate(build_loss)
            flat[i] = original - epsilon
            minus = _evaluate(build_loss)
            flat[i] = original
            numeric = (plus - minus) / (2.0 * epsilon)
            a = float(analytic[i])
            error = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, error)
    logger.debug("grad_check over %d tensors: max relative error %.3e", len(params), worst)
    return worst
