"""Masked-language-model pretraining for the stand-in model."""

import logging
from typing import Sequence

import numpy as np
from tqdm import tqdm

from adaprompt.diffcore import ops
from adaprompt.diffcore.graph import ComputeGraph, backward
from adaprompt.diffcore.tensor import Tensor
from adaprompt.errors import ContractError, EmptyInputError
from adaprompt.mlm.model import MlmModel
from adaprompt.textcore.vocab import MASK_ID
from adaprompt.training.optim import AdamState, adam_step
from adaprompt.utils.config import show_progress

logger = logging.getLogger(__name__)

DEFAULT_MASK_PROB = 0.15


def mask_sequence(
    ids: Sequence[int], mask_prob: float, rng: np.random.Generator
) -> tuple[list[int], list[int]]:
    """Replace positions with [MASK] independently with probability ``mask_prob``.

    At least one position is always masked.

    Returns:
        tuple: (masked ids, masked positions in ascending order)
    """
    selected = rng.random(len(ids)) < mask_prob
    if not selected.any():
        selected[rng.integers(len(ids))] = True
    positions = [int(i) for i in np.flatnonzero(selected)]
    masked = list(ids)
    for i in positions:
        masked[i] = MASK_ID
    return masked, positions


def mlm_loss(
    model: MlmModel,
    batch: Sequence[Sequence[int]],
    mask_prob: float,
    rng: np.random.Generator,
    train_mode: bool = True,
) -> Tensor:
    """Mean cross-entropy of the true tokens over all masked positions in ``batch``."""
    if not batch:
        raise EmptyInputError("MLM batch is empty")
    if not 0.0 < mask_prob < 1.0:
        raise ContractError(f"mask_prob must be in (0, 1), got {mask_prob}")

    rows, targets = [], []
    for ids in batch:
        if len(ids) < 1:
            raise ContractError("every sequence in an MLM batch needs at least one token")
        masked, positions = mask_sequence(ids, mask_prob, rng)
        hidden = model.hidden_states(model.embed_tokens(masked), train_mode, rng)
        rows.append(ops.take(hidden, positions, axis=0))
        targets.extend(ids[i] for i in positions)
    stacked = rows[0] if len(rows) == 1 else ops.concat(rows, axis=0)
    return ops.cross_entropy_from_logits(model.vocab_logits(stacked), targets)


def mlm_pretrain_step(
    model: MlmModel,
    batch: Sequence[Sequence[int]],
    mask_prob: float,
    rng: np.random.Generator,
    optimizer: AdamState | None = None,
    lr: float = 1e-3,
    train_mode: bool = True,
) -> float:
    """Compute the MLM loss on ``batch``; with an optimizer, also update the model.

    The returned loss is the value before the update.
    """
    if optimizer is None:
        return float(mlm_loss(model, batch, mask_prob, rng, train_mode).data)

    params = model.parameters()
    with ComputeGraph() as graph:
        loss = mlm_loss(model, batch, mask_prob, rng, train_mode)
    grads = backward(graph, loss)
    adam_step(params, graph.gradients_for(grads, params), optimizer, lr)
    return float(loss.data)


def pretrain_mlm(
    model: MlmModel,
    sequences: Sequence[Sequence[int]],
    epochs: int = 1,
    batch_size: int = 16,
    lr: float = 1e-3,
    mask_prob: float = DEFAULT_MASK_PROB,
    seed: int = 0,
) -> list[float]:
    """Pretrain ``model`` on token-id sequences; returns the mean loss per epoch."""
    if not sequences:
        raise EmptyInputError("MLM pretraining corpus is empty")
    model.set_trainable(True)
    rng = np.random.default_rng(seed)
    optimizer = AdamState.for_params(model.parameters())
    history = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(sequences))
        losses = []
        starts = range(0, len(order), batch_size)
        for start in tqdm(starts, desc=f"mlm epoch {epoch}", disable=not show_progress()):
            batch = [sequences[i] for i in order[start : start + batch_size]]
            losses.append(mlm_pretrain_step(model, batch, mask_prob, rng, optimizer, lr))
        history.append(float(np.mean(losses)))
        logger.info("MLM pretraining epoch %d/%d: loss %.4f", epoch, epochs, history[-1])
    return history
