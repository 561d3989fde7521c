from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from adaprompt.errors import CapacityError, EmptyInputError, TokenIndexError
from adaprompt.textcore.dataset import LabeledExample
from adaprompt.textcore.tokenizer import tokenize

PAD, MASK, CLS, SEP, UNK = "[PAD]", "[MASK]", "[CLS]", "[SEP]", "[UNK]"
SPECIAL_TOKENS = (PAD, MASK, CLS, SEP, UNK)
MASK_ID = SPECIAL_TOKENS.index(MASK)
DEFAULT_MAX_LEN = 32


class Vocab:
    """Bijection between token strings and ids.

    Ids 0..4 are always the reserved tokens [PAD], [MASK], [CLS], [SEP], [UNK].
    Unknown tokens encode to [UNK].
    """

    def __init__(self, tokens: Iterable[str]):
        id_to_token = list(SPECIAL_TOKENS)
        for token in tokens:
            if token in SPECIAL_TOKENS:
                continue
            id_to_token.append(token)
        token_to_id = {token: i for i, token in enumerate(id_to_token)}
        if len(token_to_id) != len(id_to_token):
            raise ValueError("Vocabulary tokens must be unique")
        self._id_to_token = tuple(id_to_token)
        self._token_to_id = token_to_id

    def __len__(self) -> int:
        return len(self._id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self._id_to_token == other._id_to_token

    @property
    def tokens(self) -> tuple[str, ...]:
        return self._id_to_token

    @property
    def mask_id(self) -> int:
        return self._token_to_id[MASK]

    @property
    def unk_id(self) -> int:
        return self._token_to_id[UNK]

    def is_reserved(self, token_id: int) -> bool:
        return token_id < len(SPECIAL_TOKENS)

    def id_of(self, token: str) -> int:
        return self._token_to_id.get(token, self.unk_id)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.id_of(t) for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        size = len(self)
        out = []
        for i in ids:
            if not 0 <= i < size:
                raise TokenIndexError(f"Token id {i} outside vocabulary of size {size}")
            out.append(self._id_to_token[i])
        return out

    def to_list(self) -> list[str]:
        return list(self._id_to_token)

    @classmethod
    def from_list(cls, tokens: Sequence[str]) -> "Vocab":
        if tuple(tokens[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise ValueError("Serialized vocabulary must start with the reserved tokens")
        return cls(tokens[len(SPECIAL_TOKENS) :])


@dataclass(frozen=True)
class TokenSequence:
    """Token ids of one input text: 1 <= n <= max_len, never containing [MASK]."""

    ids: tuple[int, ...]

    def __post_init__(self):
        if not self.ids:
            raise EmptyInputError("A token sequence needs at least one token")
        if MASK_ID in self.ids:
            raise ValueError("Input token sequences must not contain [MASK]")

    def __len__(self) -> int:
        return len(self.ids)


def build_vocab(corpus: Sequence[LabeledExample], min_count: int = 1) -> Vocab:
    """Collect every token seen at least ``min_count`` times.

    Tokens are ordered by descending frequency, then lexicographically.
    """
    if not corpus:
        raise EmptyInputError("Cannot build a vocabulary from an empty corpus")
    counts = Counter()
    for example in corpus:
        counts.update(tokenize(example.text))
    kept = [t for t, c in counts.items() if c >= min_count]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocab(kept)


def encode_text(text: str, vocab: Vocab, max_len: int = DEFAULT_MAX_LEN) -> TokenSequence:
    """Tokenize, map to ids and truncate from the right to ``max_len``."""
    if max_len < 1:
        raise CapacityError(f"max_len must be positive, got {max_len}")
    ids = vocab.encode(tokenize(text))[:max_len]
    return TokenSequence(tuple(ids))
