from dataclasses import dataclass

from adaprompt.errors import PatternError, VocabularyError
from adaprompt.textcore.tokenizer import tokenize
from adaprompt.textcore.vocab import MASK, Vocab


@dataclass(frozen=True)
class PromptSpec:
    """Hand-crafted prompt: m token ids with the [MASK] inserted before ``tokens[mask_slot]``.

    ``m == 0`` is the pure adaptive-prompt case (the template is just [MASK]).
    """

    tokens: tuple[int, ...]
    mask_slot: int
    pattern: str = MASK

    def __post_init__(self):
        if not 0 <= self.mask_slot <= len(self.tokens):
            raise PatternError(f"mask_slot {self.mask_slot} outside [0, {len(self.tokens)}]")

    @property
    def m(self) -> int:
        return len(self.tokens)

    def ids_with_mask(self, mask_id: int) -> list[int]:
        return [*self.tokens[: self.mask_slot], mask_id, *self.tokens[self.mask_slot :]]


def _known_ids(text: str, vocab: Vocab) -> list[int]:
    if not text.strip():
        return []
    ids = []
    for token in tokenize(text):
        if token not in vocab:
            raise VocabularyError(f"prompt token {token!r} is not in the vocabulary")
        ids.append(vocab.id_of(token))
    return ids


def parse_prompt_spec(pattern: str, vocab: Vocab) -> PromptSpec:
    """Parse a pattern such as ``"it is [MASK]"`` into a PromptSpec."""
    if not isinstance(pattern, str):
        raise TypeError(f"Expected a string, but received {type(pattern).__name__}")
    occurrences = pattern.count(MASK)
    if occurrences != 1:
        raise PatternError(f"pattern {pattern!r} needs exactly one {MASK}, found {occurrences}")
    before, after = pattern.split(MASK)
    before_ids = _known_ids(before, vocab)
    after_ids = _known_ids(after, vocab)
    return PromptSpec(tuple(before_ids + after_ids), len(before_ids), pattern)
