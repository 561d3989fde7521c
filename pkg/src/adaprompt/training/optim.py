from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from adaprompt.diffcore.tensor import Tensor
from adaprompt.errors import ShapeError

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


@dataclass
class AdamState:
    """First/second moment estimates for a fixed, ordered list of parameters."""

    first_moments: list[np.ndarray]
    second_moments: list[np.ndarray]
    step: int = 0
    beta1: float = BETA1
    beta2: float = BETA2
    epsilon: float = EPSILON
    names: list[str | None] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Tensor]) -> "AdamState":
        return cls(
            first_moments=[np.zeros_like(p.data) for p in params],
            second_moments=[np.zeros_like(p.data) for p in params],
            names=[p.name for p in params],
        )


def adam_step(
    params: Sequence[Tensor], grads: Sequence[Tensor], state: AdamState, lr: float
) -> tuple[Sequence[Tensor], AdamState]:
    """Apply one bias-corrected Adam update to ``params`` in place.

    Returns:
        tuple: The same parameter objects and the advanced state.
    """
    if not (len(params) == len(grads) == len(state.first_moments)):
        raise ShapeError(
            f"{len(params)} params, {len(grads)} grads, {len(state.first_moments)} moment slots"
        )
    for p, g, m in zip(params, grads, state.first_moments):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"parameter {p.name!r}: shape {p.shape}, gradient {g.shape}")

    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    for p, g, m, v in zip(params, grads, state.first_moments, state.second_moments):
        m *= state.beta1
        m += (1.0 - state.beta1) * g.data
        v *= state.beta2
        v += (1.0 - state.beta2) * g.data * g.data
        m_hat = m / correction1
        v_hat = v / correction2
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + state.epsilon)).astype(p.data.dtype)
    return params, state
