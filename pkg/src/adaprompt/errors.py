"""Exception hierarchy shared by every adaprompt package.

Each class also derives from the closest builtin so callers that only know
about ``ValueError`` or ``IndexError`` keep working.
"""


class AdaPromptError(Exception):
    """Base class for all errors raised by adaprompt."""


# diffcore


class NumericError(AdaPromptError, ArithmeticError):
    """A forward pass produced (or was fed) a non-finite value."""


class ContractError(AdaPromptError, ValueError):
    """A call violated an operation's precondition."""


class GraphReuseError(AdaPromptError, RuntimeError):
    """backward() was called twice on the same compute graph."""


class DeterminismError(AdaPromptError, RuntimeError):
    """A function expected to be deterministic returned different values."""


class ShapeError(AdaPromptError, ValueError):
    """Operand shapes do not line up."""


class TokenIndexError(AdaPromptError, IndexError):
    """A token id or class index is outside its valid range."""


# textcore / template


class EmptyInputError(AdaPromptError, ValueError):
    """An input that must be non-empty was empty."""


class CapacityError(AdaPromptError, ValueError):
    """Not enough room (positions) or not enough data (examples)."""


class DatasetParseError(AdaPromptError, ValueError):
    """A dataset line could not be parsed."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class SchemaError(AdaPromptError, ValueError):
    """A dataset record is missing a field or has the wrong field type."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class VocabularyError(AdaPromptError, KeyError):
    """A token that must be known to the model is not in the vocabulary."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class PatternError(AdaPromptError, ValueError):
    """A prompt pattern does not contain exactly one [MASK] placeholder."""


class VerbalizerError(AdaPromptError, ValueError):
    """A verbalizer word is not a single, distinct, non-reserved token."""


class LabelError(AdaPromptError, KeyError):
    """A label is not part of the verbalizer."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


# training / experiments / cli


class ConfigError(AdaPromptError, ValueError):
    """A model, regime or run configuration is inconsistent."""


class SpecError(AdaPromptError, ValueError):
    """A synthetic-corpus or experiment spec is invalid."""


class SplitLeakError(AdaPromptError, RuntimeError):
    """Train and test data share an example text."""


class FreezeViolationError(AdaPromptError, RuntimeError):
    """A parameter that should have been frozen changed during training."""


class StorageError(AdaPromptError, OSError):
    """Reading or writing a file failed."""


class IntegrityError(AdaPromptError, ValueError):
    """A checkpoint's payload does not match its manifest or digest."""


class VersionError(AdaPromptError, ValueError):
    """A checkpoint was written with an unsupported format version."""
