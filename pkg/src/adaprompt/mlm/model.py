"""The stand-in masked language model.

A small post-norm transformer encoder whose vocabulary head is tied to the
token embedding table. The forward pass starts from an embedding matrix rather
than token ids, so continuous prompt vectors can be spliced in next to real
token embeddings.
"""

import copy
import hashlib
import logging
from dataclasses import asdict, dataclass, fields
from typing import TYPE_CHECKING, Sequence

import numpy as np

from adaprompt.diffcore import ops
from adaprompt.diffcore.tensor import Tensor, get_dtype
from adaprompt.errors import CapacityError, ConfigError, ShapeError, TokenIndexError

if TYPE_CHECKING:
    from adaprompt.template.hybrid import HybridTemplate

logger = logging.getLogger(__name__)


@dataclass
class MlmConfig:
    vocab_size: int
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    max_positions: int = 64
    dropout_rate: float = 0.1
    seed: int = 0
    init_std: float = 0.02

    def validate(self) -> None:
        if self.vocab_size < 5:
            raise ConfigError(f"vocab_size must be at least 5, got {self.vocab_size}")
        for name in ("d_model", "n_layers", "n_heads", "d_ff", "max_positions"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.d_model % self.n_heads:
            raise ConfigError(
                f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.init_std <= 0:
            raise ConfigError(f"init_std must be positive, got {self.init_std}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MlmConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown MlmConfig fields: {sorted(unknown)}")
        return cls(**data)


def parameter_shapes(config: MlmConfig) -> list[tuple[str, tuple[int, ...], str]]:
    """(name, shape, initializer) for every parameter, in canonical order."""
    d, f = config.d_model, config.d_ff
    specs = [
        ("embeddings.token", (config.vocab_size, d), "normal"),
        ("embeddings.position", (config.max_positions, d), "normal"),
        ("embeddings.norm.gain", (d,), "ones"),
        ("embeddings.norm.bias", (d,), "zeros"),
    ]
    for i in range(config.n_layers):
        prefix = f"layers.{i}"
        for proj in ("query", "key", "value", "output"):
            specs.append((f"{prefix}.attention.{proj}.weight", (d, d), "normal"))
            # no key bias: a per-row offset cancels in the softmax
            if proj != "key":
                specs.append((f"{prefix}.attention.{proj}.bias", (d,), "zeros"))
        specs += [
            (f"{prefix}.attention_norm.gain", (d,), "ones"),
            (f"{prefix}.attention_norm.bias", (d,), "zeros"),
            (f"{prefix}.ffn.in.weight", (d, f), "normal"),
            (f"{prefix}.ffn.in.bias", (f,), "zeros"),
            (f"{prefix}.ffn.out.weight", (f, d), "normal"),
            (f"{prefix}.ffn.out.bias", (d,), "zeros"),
            (f"{prefix}.ffn_norm.gain", (d,), "ones"),
            (f"{prefix}.ffn_norm.bias", (d,), "zeros"),
        ]
    specs.append(("head.bias", (config.vocab_size,), "zeros"))
    return specs


class MlmModel:
    """Transformer encoder with a tied vocabulary head.

    Attributes:
        config: The MlmConfig the parameters were built from.
        params: Parameter tensors keyed by name, in canonical order.
    """

    def __init__(self, config: MlmConfig, params: dict[str, Tensor]):
        self.config = config
        self.params = params

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return list(self.params.items())

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def set_trainable(self, trainable: bool) -> None:
        for p in self.params.values():
            p.requires_grad = trainable

    def copy(self) -> "MlmModel":
        return copy.deepcopy(self)

    def parameter_digest(self) -> str:
        """SHA-256 over every parameter's bytes, in canonical order."""
        digest = hashlib.sha256()
        for name, p in self.params.items():
            digest.update(name.encode())
            digest.update(np.ascontiguousarray(p.data).tobytes())
        return digest.hexdigest()

    # Forward pass

    def embed_tokens(self, ids: Sequence[int]) -> Tensor:
        """Token embedding rows e(ids), without positional embeddings."""
        ids = list(ids)
        if any(not 0 <= i < self.config.vocab_size for i in ids):
            raise TokenIndexError(f"token id outside [0, {self.config.vocab_size})")
        if not ids:
            return Tensor(np.zeros((0, self.config.d_model), dtype=get_dtype()))
        return ops.gather(self.params["embeddings.token"], ids)

    def _linear(self, x: Tensor, name: str) -> Tensor:
        return ops.add(ops.matmul(x, self.params[f"{name}.weight"]), self.params[f"{name}.bias"])

    def _norm(self, x: Tensor, name: str) -> Tensor:
        return ops.layer_norm(x, self.params[f"{name}.gain"], self.params[f"{name}.bias"])

    def _self_attention(
        self,
        x: Tensor,
        prefix: str,
        train_mode: bool,
        rng: np.random.Generator | None,
        attention_trace: list | None,
    ) -> Tensor:
        cfg = self.config
        head_dim = cfg.d_model // cfg.n_heads
        q = self._linear(x, f"{prefix}.attention.query")
        k = ops.matmul(x, self.params[f"{prefix}.attention.key.weight"])
        v = self._linear(x, f"{prefix}.attention.value")
        heads = []
        for h in range(cfg.n_heads):
            lo, hi = h * head_dim, (h + 1) * head_dim
            qh = ops.slice_(q, lo, hi, axis=1)
            kh = ops.slice_(k, lo, hi, axis=1)
            vh = ops.slice_(v, lo, hi, axis=1)
            scores = ops.scale(ops.matmul(qh, ops.transpose(kh)), 1.0 / np.sqrt(head_dim))
            weights = ops.softmax(scores, axis=-1)
            if attention_trace is not None:
                attention_trace.append(weights.data.copy())
            weights = ops.dropout(weights, cfg.dropout_rate, rng, train_mode)
            heads.append(ops.matmul(weights, vh))
        context = heads[0] if len(heads) == 1 else ops.concat(heads, axis=1)
        return self._linear(context, f"{prefix}.attention.output")

    def hidden_states(
        self,
        template: "HybridTemplate | Tensor",
        train_mode: bool = False,
        rng: np.random.Generator | None = None,
        attention_trace: list | None = None,
    ) -> Tensor:
        """Encode an assembled embedding matrix into contextual states (T x d_model)."""
        embeddings = template if isinstance(template, Tensor) else template.embeddings
        cfg = self.config
        length = embeddings.shape[0]
        if length > cfg.max_positions:
            raise CapacityError(
                f"template length {length} exceeds max_positions={cfg.max_positions}"
            )
        if embeddings.shape[1] != cfg.d_model:
            raise ShapeError(f"embedding width {embeddings.shape[1]} != d_model {cfg.d_model}")

        positions = ops.gather(self.params["embeddings.position"], range(length))
        x = self._norm(ops.add(embeddings, positions), "embeddings.norm")
        x = ops.dropout(x, cfg.dropout_rate, rng, train_mode)
        for i in range(cfg.n_layers):
            prefix = f"layers.{i}"
            attended = self._self_attention(x, prefix, train_mode, rng, attention_trace)
            attended = ops.dropout(attended, cfg.dropout_rate, rng, train_mode)
            x = self._norm(ops.add(x, attended), f"{prefix}.attention_norm")
            hidden = ops.gelu(self._linear(x, f"{prefix}.ffn.in"))
            hidden = self._linear(hidden, f"{prefix}.ffn.out")
            hidden = ops.dropout(hidden, cfg.dropout_rate, rng, train_mode)
            x = self._norm(ops.add(x, hidden), f"{prefix}.ffn_norm")
        return x

    def vocab_logits(self, hidden: Tensor) -> Tensor:
        """Tied head: hidden @ E^T + bias, over the whole vocabulary."""
        table = self.params["embeddings.token"]
        return ops.add(ops.matmul(hidden, ops.transpose(table)), self.params["head.bias"])

    def label_logits(self, hidden: Tensor, token_ids: Sequence[int]) -> Tensor:
        """Tied head restricted to ``token_ids``; equals the matching vocab_logits columns."""
        rows = ops.gather(self.params["embeddings.token"], token_ids)
        bias = ops.take(self.params["head.bias"], token_ids)
        return ops.add(ops.matmul(hidden, ops.transpose(rows)), bias)

    def forward_from_embeddings(
        self,
        template: "HybridTemplate | Tensor",
        train_mode: bool = False,
        rng: np.random.Generator | None = None,
        attention_trace: list | None = None,
    ) -> Tensor:
        """Vocabulary logits (T x vocab_size) for an assembled template.

        :param template: HybridTemplate (or a bare T x d_model embedding tensor).
        :param train_mode: Enables dropout; requires ``rng``.
        :param attention_trace: When given, every head's attention matrix is appended.
        """
        hidden = self.hidden_states(template, train_mode, rng, attention_trace)
        return self.vocab_logits(hidden)


def init_model(config: MlmConfig) -> MlmModel:
    """Build a model with N(0, init_std) weights, zero biases and unit norm gains."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    dtype = get_dtype()
    params = {}
    for name, shape, kind in parameter_shapes(config):
        if kind == "normal":
            data = rng.normal(0.0, config.init_std, size=shape)
        elif kind == "ones":
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        params[name] = Tensor(data.astype(dtype), requires_grad=True, name=name)
    model = MlmModel(config, params)
    logger.debug("Initialised MLM with %d parameters", model.parameter_count())
    return model
