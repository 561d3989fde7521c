from dataclasses import dataclass

import numpy as np

from adaprompt.diffcore import ops
from adaprompt.diffcore.tensor import Tensor
from adaprompt.mlm.model import MlmModel
from adaprompt.promptgen.layer import PromptGenLayer
from adaprompt.template.hybrid import HybridTemplate, assemble_hybrid
from adaprompt.template.prompt import PromptSpec
from adaprompt.template.verbalizer import (
    LabelPosterior,
    Verbalizer,
    posterior_from_label_logits,
    predict_label,
)
from adaprompt.textcore.vocab import DEFAULT_MAX_LEN, TokenSequence, Vocab, encode_text


@dataclass
class PromptClassifier:
    """Everything needed to score a text through the cloze template.

    With ``prompt_layer`` set the template is the hybrid one; without it, the
    hand-crafted template used by zero-shot and HPL.
    """

    model: MlmModel
    vocab: Vocab
    prompt: PromptSpec
    verbalizer: Verbalizer
    prompt_layer: PromptGenLayer | None = None
    max_len: int = DEFAULT_MAX_LEN

    def encode(self, text: str) -> TokenSequence:
        return encode_text(text, self.vocab, self.max_len)

    def template_for(self, x: TokenSequence) -> HybridTemplate:
        x_embeddings = self.model.embed_tokens(x.ids)
        adaptive = None
        if self.prompt_layer is not None:
            adaptive = self.prompt_layer.generate_prompt(x_embeddings)
        return assemble_hybrid(self.model, self.prompt, adaptive, x, x_embeddings)

    def label_logits(
        self, x: TokenSequence, train_mode: bool = False, rng: np.random.Generator | None = None
    ) -> Tensor:
        """Verbalizer-word logits at the [MASK] position (1 x labels)."""
        template = self.template_for(x)
        hidden = self.model.hidden_states(template, train_mode, rng)
        mask_row = ops.slice_(hidden, template.mask_index, template.mask_index + 1, axis=0)
        return self.model.label_logits(mask_row, self.verbalizer.token_ids)

    def mask_logits(self, x: TokenSequence) -> Tensor:
        """Full-vocabulary logits at the [MASK] position (eval mode)."""
        template = self.template_for(x)
        logits = self.model.forward_from_embeddings(template)
        return ops.slice_(logits, template.mask_index, template.mask_index + 1, axis=0)

    def posterior(self, text: str) -> LabelPosterior:
        return posterior_from_label_logits(self.label_logits(self.encode(text)), self.verbalizer)

    def predict(self, text: str) -> str:
        return predict_label(self.posterior(text))
