import pytest

from adaprompt.errors import CapacityError, EmptyInputError, TokenIndexError
from adaprompt.textcore.dataset import LabeledExample
from adaprompt.textcore.tokenizer import count_tokens, tokenize
from adaprompt.textcore.vocab import (
    MASK,
    MASK_ID,
    SPECIAL_TOKENS,
    TokenSequence,
    Vocab,
    build_vocab,
    encode_text,
)


@pytest.mark.parametrize(
    "input_content,expected_output",
    [
        ("It is GOOD", ["it", "is", "good"]),
        ("great, really great!", ["great", ",", "really", "great", "!"]),
        ("  spaced   out  ", ["spaced", "out"]),
        ("don't", ["don", "'", "t"]),
        ("café 42", ["café", "42"]),
    ],
)
def test_tokenize(input_content, expected_output):
    """
    Test tokenize with:
        - mixed case
        - punctuation as separate tokens
        - surrounding whitespace
        - apostrophes
        - non-ASCII letters and digits
    """
    assert tokenize(input_content) == expected_output


@pytest.mark.parametrize("input_content", ["", "   ", "\n\t"])
def test_tokenize_empty(input_content):
    with pytest.raises(EmptyInputError):
        tokenize(input_content)


def test_tokenize_rejects_non_string():
    with pytest.raises(TypeError):
        tokenize(42)


def test_count_tokens():
    assert count_tokens("the food was good .") == 5


def _examples(*texts):
    return [LabeledExample(t, "positive", "d") for t in texts]


def test_build_vocab_orders_by_frequency_then_token():
    vocab = build_vocab(_examples("b a", "a c", "a b"))
    assert vocab.tokens == SPECIAL_TOKENS + ("a", "b", "c")


def test_build_vocab_min_count():
    vocab = build_vocab(_examples("b a", "a c", "a b"), min_count=2)
    assert "c" not in vocab
    assert vocab.tokens[len(SPECIAL_TOKENS) :] == ("a", "b")


def test_build_vocab_empty_corpus():
    with pytest.raises(EmptyInputError):
        build_vocab([])


def test_reserved_ids_are_fixed():
    vocab = build_vocab(_examples("x"))
    assert vocab.id_of(MASK) == MASK_ID == vocab.mask_id
    assert all(vocab.is_reserved(i) for i in range(len(SPECIAL_TOKENS)))
    assert not vocab.is_reserved(len(SPECIAL_TOKENS))


def test_unknown_tokens_map_to_unk():
    vocab = build_vocab(_examples("a b"))
    assert vocab.encode(["a", "zzz"]) == [vocab.id_of("a"), vocab.unk_id]


def test_decode_inverts_encode():
    vocab = build_vocab(_examples("the food was good"))
    ids = vocab.encode(["good", "food", "the"])
    assert vocab.decode(ids) == ["good", "food", "the"]


def test_decode_out_of_range():
    vocab = build_vocab(_examples("a"))
    with pytest.raises(TokenIndexError):
        vocab.decode([len(vocab)])


def test_serialized_vocab_round_trip():
    vocab = build_vocab(_examples("a b c"))
    assert Vocab.from_list(vocab.to_list()) == vocab
    with pytest.raises(ValueError):
        Vocab.from_list(["a", "b"])


def test_encode_text_truncates_from_the_right():
    vocab = build_vocab(_examples("a b c d"))
    sequence = encode_text("a b c d", vocab, max_len=3)
    assert vocab.decode(sequence.ids) == ["a", "b", "c"]


def test_encode_text_bad_max_len():
    vocab = build_vocab(_examples("a"))
    with pytest.raises(CapacityError):
        encode_text("a", vocab, max_len=0)


def test_token_sequence_invariants():
    with pytest.raises(EmptyInputError):
        TokenSequence(())
    with pytest.raises(ValueError):
        TokenSequence((7, MASK_ID))
    assert len(TokenSequence((7, 8))) == 2
