import regex

from adaprompt.errors import EmptyInputError

# Words are runs of letters/digits; every other visible character stands alone.
TOKEN_PATTERN = regex.compile(r"[\p{L}\p{N}_]+|[^\p{L}\p{N}_\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase ``text`` and split it into word and punctuation tokens."""
    if not isinstance(text, str):
        raise TypeError(f"Expected a string, but received {type(text).__name__}")
    if not text.strip():
        raise EmptyInputError("Cannot tokenize empty or whitespace-only text")
    return TOKEN_PATTERN.findall(text.lower())


def count_tokens(text: str) -> int:
    """Count tokens in a text string."""
    return len(tokenize(text))
