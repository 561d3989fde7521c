"""Dense tensors and the process-wide precision setting."""

from contextlib import contextmanager
from typing import Iterator

import numpy as np

from adaprompt.errors import ConfigError
from adaprompt.utils.config import env_precision

_PRECISIONS = {"float32": np.float32, "float64": np.float64}
_dtype = _PRECISIONS.get(env_precision(), np.float32)


def set_precision(mode: str) -> None:
    """Select the global floating point width for newly created tensors.

    :param mode: ``"float64"`` for verification, ``"float32"`` for experiments.
    """
    global _dtype
    if mode not in _PRECISIONS:
        raise ConfigError(f"Unknown precision mode {mode!r}; use one of {sorted(_PRECISIONS)}")
    _dtype = _PRECISIONS[mode]


def get_dtype() -> type:
    return _dtype


def precision_name() -> str:
    return "float64" if _dtype is np.float64 else "float32"


@contextmanager
def precision(mode: str) -> Iterator[None]:
    """Temporarily switch the global precision."""
    previous = precision_name()
    set_precision(mode)
    try:
        yield
    finally:
        set_precision(previous)


class Tensor:
    """A row-major real array that may take part in a compute graph.

    Attributes:
        data: The underlying numpy array (owned, mutated in place by optimizers).
        requires_grad: Whether gradients should be tracked for this tensor.
        name: Optional parameter name, used by checkpoints and diagnostics.
    """

    __slots__ = ("data", "requires_grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=_dtype)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False, name=self.name)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # Operator sugar; the ops module imports this one, so import lazily.

    def __add__(self, other):
        from adaprompt.diffcore import ops

        return ops.add(self, other)

    def __radd__(self, other):
        from adaprompt.diffcore import ops

        return ops.add(other, self)

    def __sub__(self, other):
        from adaprompt.diffcore import ops

        return ops.sub(self, other)

    def __mul__(self, other):
        from adaprompt.diffcore import ops

        return ops.mul(self, other)

    def __rmul__(self, other):
        from adaprompt.diffcore import ops

        return ops.mul(other, self)

    def __matmul__(self, other):
        from adaprompt.diffcore import ops

        return ops.matmul(self, other)


def as_tensor(value) -> Tensor:
    """Wrap constants (floats, arrays) as non-differentiable tensors."""
    return value if isinstance(value, Tensor) else Tensor(value)
