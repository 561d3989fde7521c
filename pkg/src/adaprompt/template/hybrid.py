from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from adaprompt.diffcore import ops
from adaprompt.diffcore.tensor import Tensor
from adaprompt.errors import CapacityError, ShapeError
from adaprompt.template.prompt import PromptSpec
from adaprompt.textcore.vocab import MASK_ID, TokenSequence

if TYPE_CHECKING:
    from adaprompt.mlm.model import MlmModel
    from adaprompt.promptgen.layer import AdaptivePrompt


@dataclass
class HybridTemplate:
    """Assembled embedding rows e(P with [MASK]), h, e(X) and where each segment sits."""

    embeddings: Tensor
    mask_index: int
    spans: dict[str, tuple[int, int]] = field(default_factory=dict)

    @property
    def length(self) -> int:
        return self.embeddings.shape[0]


def assemble_hybrid(
    model: "MlmModel",
    prompt: PromptSpec,
    adaptive: "AdaptivePrompt | None",
    x: TokenSequence,
    x_embeddings: Tensor | None = None,
) -> HybridTemplate:
    """Concatenate the hand-crafted prompt (with [MASK]), adaptive vectors and input.

    Without ``adaptive`` the result is the plain hand-crafted template.

    :param x_embeddings: Optional precomputed ``model.embed_tokens(x.ids)``.
    """
    d_model = model.config.d_model
    s = 0 if adaptive is None else adaptive.s
    prompt_rows = prompt.m + 1
    total = prompt_rows + s + len(x)
    if total > model.config.max_positions:
        raise CapacityError(
            f"template of length {total} exceeds max_positions={model.config.max_positions}"
        )
    if adaptive is not None and adaptive.d_model != d_model:
        raise ShapeError(f"adaptive prompt width {adaptive.d_model} != d_model {d_model}")

    parts = [model.embed_tokens(prompt.ids_with_mask(MASK_ID))]
    if s:
        parts.append(adaptive.vectors)
    parts.append(model.embed_tokens(x.ids) if x_embeddings is None else x_embeddings)

    spans = {
        "prompt": (0, prompt_rows),
        "adaptive": (prompt_rows, prompt_rows + s),
        "input": (prompt_rows + s, total),
    }
    return HybridTemplate(ops.concat(parts, axis=0), prompt.mask_slot, spans)
