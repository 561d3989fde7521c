from dataclasses import dataclass
from typing import Mapping

import numpy as np

from adaprompt.diffcore import ops
from adaprompt.diffcore.tensor import Tensor
from adaprompt.errors import EmptyInputError, LabelError, ShapeError, VerbalizerError
from adaprompt.textcore.tokenizer import tokenize
from adaprompt.textcore.vocab import Vocab

DEFAULT_VERBALIZER = {"positive": "good", "negative": "bad"}


@dataclass(frozen=True)
class Verbalizer:
    """Ordered map from class label to a single label-word token id.

    ``vocab_size`` is the length of the vocabulary the ids were drawn from,
    when known; full-vocabulary logit vectors must match it.
    """

    labels: tuple[str, ...]
    words: tuple[str, ...]
    token_ids: tuple[int, ...]
    vocab_size: int | None = None

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str], vocab: Vocab) -> "Verbalizer":
        if not mapping:
            raise EmptyInputError("A verbalizer needs at least one label")
        ids = []
        for label, word in mapping.items():
            tokens = tokenize(word)
            if len(tokens) != 1:
                raise VerbalizerError(f"label word {word!r} for {label!r} is not a single token")
            if tokens[0] not in vocab:
                raise VerbalizerError(f"label word {word!r} is not in the vocabulary")
            token_id = vocab.id_of(tokens[0])
            if vocab.is_reserved(token_id):
                raise VerbalizerError(f"label word {word!r} is a reserved token")
            ids.append(token_id)
        if len(set(ids)) != len(ids):
            raise VerbalizerError("label words must map to distinct tokens")
        return cls(tuple(mapping), tuple(mapping.values()), tuple(ids), len(vocab))

    def __len__(self) -> int:
        return len(self.labels)

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LabelError(f"label {label!r} is not one of {list(self.labels)}") from None

    def to_mapping(self) -> dict[str, str]:
        return dict(zip(self.labels, self.words))


@dataclass(frozen=True)
class LabelPosterior:
    labels: tuple[str, ...]
    probabilities: tuple[float, ...]

    def __getitem__(self, label: str) -> float:
        return self.probabilities[self.labels.index(label)]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.labels, self.probabilities))


def posterior_from_label_logits(label_logits, verbalizer: Verbalizer) -> LabelPosterior:
    """Softmax over the verbalizer words' logits only."""
    values = np.asarray(getattr(label_logits, "data", label_logits)).reshape(-1)
    if values.size != len(verbalizer):
        raise ShapeError(f"{values.size} label logits for {len(verbalizer)} labels")
    probs = ops.softmax(Tensor(values), axis=-1).data
    return LabelPosterior(verbalizer.labels, tuple(float(p) for p in probs))


def verbalizer_posterior(logits_at_mask, verbalizer: Verbalizer) -> LabelPosterior:
    """Label posterior from the full-vocabulary logits at the [MASK] position."""
    values = np.asarray(getattr(logits_at_mask, "data", logits_at_mask)).reshape(-1)
    if verbalizer.vocab_size is not None and values.size != verbalizer.vocab_size:
        raise ShapeError(
            f"logit vector of length {values.size} for a vocabulary of {verbalizer.vocab_size}"
        )
    if values.size <= max(verbalizer.token_ids):
        raise ShapeError(f"logit vector of length {values.size} is shorter than the vocabulary")
    return posterior_from_label_logits(values[list(verbalizer.token_ids)], verbalizer)


def predict_label(posterior: LabelPosterior) -> str:
    """Most probable label; ties go to the label listed first in the verbalizer."""
    return posterior.labels[int(np.argmax(posterior.probabilities))]
