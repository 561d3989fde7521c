import pytest

from adaprompt.diffcore.tensor import precision
from adaprompt.mlm.model import MlmConfig, init_model
from adaprompt.promptgen.layer import PromptGenConfig, init_prompt_layer
from adaprompt.template.classifier import PromptClassifier
from adaprompt.template.prompt import parse_prompt_spec
from adaprompt.template.verbalizer import DEFAULT_VERBALIZER, Verbalizer
from adaprompt.textcore.dataset import LabeledExample
from adaprompt.textcore.vocab import build_vocab

TINY_TEXTS = [
    ("the food was good", "positive"),
    ("the room was bad", "negative"),
    ("it is a great movie", "positive"),
    ("what an awful hotel", "negative"),
    ("service is nice and fast", "positive"),
    ("the film was poor and slow", "negative"),
    ("overall it was good", "positive"),
    ("i would say it is bad", "negative"),
]


@pytest.fixture(autouse=True)
def float64_mode(monkeypatch):
    """Run every test in float64 with progress bars off."""
    monkeypatch.setenv("ADAPROMPT_PROGRESS", "0")
    with precision("float64"):
        yield


@pytest.fixture
def tiny_examples():
    return [LabeledExample(text, label, "tiny") for text, label in TINY_TEXTS]


@pytest.fixture
def tiny_vocab(tiny_examples):
    return build_vocab(tiny_examples)


@pytest.fixture
def tiny_config(tiny_vocab):
    return MlmConfig(
        vocab_size=len(tiny_vocab),
        d_model=16,
        n_layers=1,
        n_heads=2,
        d_ff=32,
        max_positions=32,
        dropout_rate=0.0,
        seed=0,
        init_std=0.2,
    )


@pytest.fixture
def tiny_model(tiny_config):
    return init_model(tiny_config)


@pytest.fixture
def tiny_layer():
    return init_prompt_layer(PromptGenConfig(d_model=16, d_hidden=8, s=2, seed=1))


@pytest.fixture
def tiny_classifier(tiny_model, tiny_vocab, tiny_layer):
    return PromptClassifier(
        tiny_model,
        tiny_vocab,
        parse_prompt_spec("it is [MASK]", tiny_vocab),
        Verbalizer.from_mapping(DEFAULT_VERBALIZER, tiny_vocab),
        tiny_layer,
    )
