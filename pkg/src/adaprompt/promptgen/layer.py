"""Seq2seq-attention prompt generator.

A gated recurrent encoder reads the language model's embeddings of the input
text; a gated recurrent decoder then emits ``s`` continuous vectors in the
language model's embedding space, attending over the encoder states at every
step. The emitted vectors are the adaptive prompt.
"""

import copy
import logging
from dataclasses import asdict, dataclass, fields

import numpy as np

from adaprompt.diffcore import ops
from adaprompt.diffcore.tensor import Tensor, get_dtype
from adaprompt.errors import ConfigError, EmptyInputError, ShapeError

logger = logging.getLogger(__name__)


@dataclass
class PromptGenConfig:
    d_model: int
    d_hidden: int | None = None
    s: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.d_hidden is None:
            self.d_hidden = self.d_model

    def validate(self) -> None:
        if self.s < 1:
            raise ConfigError(f"s (number of prompt vectors) must be >= 1, got {self.s}")
        if self.d_model < 1 or self.d_hidden < 1:
            raise ConfigError("d_model and d_hidden must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PromptGenConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown PromptGenConfig fields: {sorted(unknown)}")
        return cls(**data)


@dataclass
class AdaptivePrompt:
    """Generated prompt vectors (s x d_model) and decoder attention (s x n)."""

    vectors: Tensor
    attention_trace: np.ndarray

    @property
    def s(self) -> int:
        return self.vectors.shape[0]

    @property
    def d_model(self) -> int:
        return self.vectors.shape[1]


def parameter_shapes(config: PromptGenConfig) -> list[tuple[str, tuple[int, ...]]]:
    d, h = config.d_model, config.d_hidden
    return [
        # gate columns are ordered [update | reset | candidate]
        ("encoder.input.weight", (d, 3 * h)),
        ("encoder.input.bias", (3 * h,)),
        ("encoder.state.gates", (h, 2 * h)),
        ("encoder.state.candidate", (h, h)),
        ("decoder.start", (1, d)),
        ("decoder.input.weight", (d + h, 3 * h)),
        ("decoder.input.bias", (3 * h,)),
        ("decoder.state.gates", (h, 2 * h)),
        ("decoder.state.candidate", (h, h)),
        ("attention.query", (h, h)),
        ("attention.key", (h, h)),
        ("attention.bias", (h,)),
        ("attention.score", (h, 1)),
        ("output.weight", (h, d)),
        ("output.bias", (d,)),
    ]


class PromptGenLayer:
    """The adaptive prompt layer; its parameters never overlap the LM's."""

    def __init__(self, config: PromptGenConfig, params: dict[str, Tensor]):
        self.config = config
        self.params = params

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return list(self.params.items())

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def set_trainable(self, trainable: bool) -> None:
        for p in self.params.values():
            p.requires_grad = trainable

    def copy(self) -> "PromptGenLayer":
        return copy.deepcopy(self)

    def _gru_step(self, projected_input: Tensor, state: Tensor, prefix: str) -> Tensor:
        """One gated recurrent update; ``projected_input`` already holds x W + b."""
        h = self.config.d_hidden
        state_gates = ops.matmul(state, self.params[f"{prefix}.state.gates"])
        update = ops.sigmoid(
            ops.add(
                ops.slice_(projected_input, 0, h, axis=1),
                ops.slice_(state_gates, 0, h, axis=1),
            )
        )
        reset = ops.sigmoid(
            ops.add(
                ops.slice_(projected_input, h, 2 * h, axis=1),
                ops.slice_(state_gates, h, 2 * h, axis=1),
            )
        )
        candidate = ops.tanh(
            ops.add(
                ops.slice_(projected_input, 2 * h, 3 * h, axis=1),
                ops.matmul(ops.mul(reset, state), self.params[f"{prefix}.state.candidate"]),
            )
        )
        return ops.add(state, ops.mul(update, ops.sub(candidate, state)))

    def encode_input(self, input_embeddings: Tensor) -> Tensor:
        """Run the encoder left to right; row j of the result depends on rows 1..j only."""
        n = input_embeddings.shape[0]
        if n == 0:
            raise EmptyInputError("Cannot generate a prompt for an empty input")
        if input_embeddings.shape[1] != self.config.d_model:
            raise ShapeError(
                f"input width {input_embeddings.shape[1]} != d_model {self.config.d_model}"
            )
        projected = ops.add(
            ops.matmul(input_embeddings, self.params["encoder.input.weight"]),
            self.params["encoder.input.bias"],
        )
        state = Tensor(np.zeros((1, self.config.d_hidden), dtype=get_dtype()))
        states = []
        for j in range(n):
            state = self._gru_step(ops.slice_(projected, j, j + 1, axis=0), state, "encoder")
            states.append(state)
        return states[0] if n == 1 else ops.concat(states, axis=0)

    def attend(
        self, decoder_state: Tensor, encoder_states: Tensor, keys: Tensor | None = None
    ) -> tuple[Tensor, Tensor]:
        """Additive attention of one decoder state over the encoder states.

        :param decoder_state: 1 x d_hidden query state.
        :param encoder_states: n x d_hidden encoder outputs.
        :param keys: Optional precomputed ``encoder_states @ attention.key``.
        :return: (context 1 x d_hidden, weights 1 x n)
        """
        h = self.config.d_hidden
        if decoder_state.shape != (1, h):
            raise ShapeError(f"decoder state must be (1, {h}), got {decoder_state.shape}")
        if encoder_states.data.ndim != 2 or encoder_states.shape[1] != h:
            raise ShapeError(f"encoder states must be (n, {h}), got {encoder_states.shape}")
        if encoder_states.shape[0] == 0:
            raise EmptyInputError("attention over zero encoder states")
        if keys is None:
            keys = ops.matmul(encoder_states, self.params["attention.key"])
        query = ops.matmul(decoder_state, self.params["attention.query"])
        energy = ops.tanh(ops.add(ops.add(keys, query), self.params["attention.bias"]))
        scores = ops.transpose(ops.matmul(energy, self.params["attention.score"]))
        weights = ops.softmax(scores, axis=-1)
        return ops.matmul(weights, encoder_states), weights

    def generate_prompt(self, input_embeddings: Tensor) -> AdaptivePrompt:
        """Map the input's embedding rows (n x d_model) to s prompt vectors."""
        encoder_states = self.encode_input(input_embeddings)
        keys = ops.matmul(encoder_states, self.params["attention.key"])
        n = encoder_states.shape[0]
        state = ops.slice_(encoder_states, n - 1, n, axis=0)
        previous = self.params["decoder.start"]
        vectors, trace = [], []
        for _ in range(self.config.s):
            context, weights = self.attend(state, encoder_states, keys)
            trace.append(weights.data[0].copy())
            step_input = ops.concat([previous, context], axis=1)
            projected = ops.add(
                ops.matmul(step_input, self.params["decoder.input.weight"]),
                self.params["decoder.input.bias"],
            )
            state = self._gru_step(projected, state, "decoder")
            previous = ops.add(
                ops.matmul(state, self.params["output.weight"]), self.params["output.bias"]
            )
            vectors.append(previous)
        stacked = vectors[0] if len(vectors) == 1 else ops.concat(vectors, axis=0)
        return AdaptivePrompt(stacked, np.vstack(trace))


def init_prompt_layer(config: PromptGenConfig) -> PromptGenLayer:
    """Uniform(-1/sqrt(d_hidden), 1/sqrt(d_hidden)) weights, zero biases."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    bound = 1.0 / np.sqrt(config.d_hidden)
    dtype = get_dtype()
    params = {}
    for name, shape in parameter_shapes(config):
        if name.endswith("bias"):
            data = np.zeros(shape)
        else:
            data = rng.uniform(-bound, bound, size=shape)
        params[name] = Tensor(data.astype(dtype), requires_grad=True, name=name)
    logger.debug("Initialised prompt layer (s=%d, d_hidden=%d)", config.s, config.d_hidden)
    return PromptGenLayer(config, params)
