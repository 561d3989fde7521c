"""Compute graphs and reverse-mode differentiation.

Operations in :mod:`adaprompt.diffcore.ops` record themselves on the graph that
is active in the current context. Outside ``with ComputeGraph():`` nothing is
recorded, which is how evaluation runs without paying for bookkeeping.
"""

import logging
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from adaprompt.diffcore.tensor import Tensor
from adaprompt.errors import ContractError, GraphReuseError

logger = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_active_graph: ContextVar["ComputeGraph | None"] = ContextVar("active_graph", default=None)

CONSTANT = -1


@dataclass
class Node:
    """One recorded step: the op tag, input node ids and the output tensor.

    Leaves have no ``backward_fn``. Constant inputs are recorded as ``CONSTANT``.
    """

    node_id: int
    op: str
    inputs: tuple[int, ...]
    output: Tensor
    backward_fn: BackwardFn | None = None


class ComputeGraph:
    """An append-only record of differentiable operations.

    Creation order is a topological order. A graph supports exactly one
    backward pass.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._ids: dict[int, int] = {}
        self.consumed = False
        self._token = None

    def __enter__(self) -> "ComputeGraph":
        self._token = _active_graph.set(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _active_graph.reset(self._token)
        self._token = None

    def node_id(self, tensor: Tensor) -> int | None:
        return self._ids.get(id(tensor))

    def _register_leaf(self, tensor: Tensor) -> int:
        node = Node(len(self.nodes), "leaf", (), tensor)
        self.nodes.append(node)
        self._ids[id(tensor)] = node.node_id
        return node.node_id

    def _input_id(self, tensor: Tensor) -> int:
        if not tensor.requires_grad:
            return CONSTANT
        known = self._ids.get(id(tensor))
        return known if known is not None else self._register_leaf(tensor)

    def record(
        self, op: str, inputs: Sequence[Tensor], output: Tensor, backward_fn: BackwardFn
    ) -> Tensor:
        if self.consumed:
            raise GraphReuseError("Cannot record on a graph that has already run backward")
        input_ids = tuple(self._input_id(t) for t in inputs)
        node = Node(len(self.nodes), op, input_ids, output, backward_fn)
        self.nodes.append(node)
        self._ids[id(output)] = node.node_id
        output.requires_grad = True
        return output

    def leaves(self) -> list[Node]:
        return [n for n in self.nodes if n.backward_fn is None]

    def gradient(self, grads: dict[int, Tensor], tensor: Tensor) -> Tensor:
        """Look up the gradient of ``tensor``; zeros if it did not influence the loss."""
        node_id = self.node_id(tensor)
        if node_id is not None and node_id in grads:
            return grads[node_id]
        return Tensor(np.zeros_like(tensor.data))

    def gradients_for(self, grads: dict[int, Tensor], params: Iterable[Tensor]) -> list[Tensor]:
        return [self.gradient(grads, p) for p in params]


def current_graph() -> ComputeGraph | None:
    return _active_graph.get()


def backward(graph: ComputeGraph, loss: Tensor) -> dict[int, Tensor]:
    """Run reverse-mode differentiation from a scalar ``loss``.

    Gradients of reused tensors are summed. Every requires-grad leaf of the graph
    gets an entry (zeros when the loss does not depend on it).

    :param graph: The graph the loss was built on.
    :param loss: A single-element tensor.
    :return: Mapping of node id to gradient tensor.
    """
    if graph.consumed:
        raise GraphReuseError("backward() already ran on this graph")
    if loss.size != 1:
        raise ContractError(f"Loss must be scalar, got shape {loss.shape}")
    graph.consumed = True

    grads: dict[int, np.ndarray] = {}
    loss_id = graph.node_id(loss)
    if loss_id is not None:
        grads[loss_id] = np.ones_like(loss.data)

    for node in reversed(graph.nodes):
        upstream = grads.get(node.node_id)
        if upstream is None or node.backward_fn is None:
            continue
        input_grads = node.backward_fn(upstream)
        for input_id, input_grad in zip(node.inputs, input_grads):
            if input_id == CONSTANT or input_grad is None:
                continue
            if input_id in grads:
                grads[input_id] = grads[input_id] + input_grad
            else:
                grads[input_id] = input_grad

    for leaf in graph.leaves():
        if leaf.node_id not in grads:
            grads[leaf.node_id] = np.zeros_like(leaf.output.data)

    logger.debug("backward over %d nodes, %d gradients", len(graph.nodes), len(grads))
    return {node_id: Tensor(g) for node_id, g in grads.items()}
