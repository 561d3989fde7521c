import numpy as np
import pytest

from adaprompt.diffcore.gradcheck import grad_check
from adaprompt.errors import ConfigError, EmptyInputError, LabelError, SplitLeakError
from adaprompt.experiments.evaluation import evaluate
from adaprompt.experiments.synthetic import (
    default_benchmark,
    filter_domains,
    gen_synthetic_corpus,
)
from adaprompt.mlm.model import MlmConfig, init_model
from adaprompt.promptgen.layer import PromptGenConfig, init_prompt_layer
from adaprompt.template.classifier import PromptClassifier
from adaprompt.template.prompt import parse_prompt_spec
from adaprompt.template.verbalizer import DEFAULT_VERBALIZER, Verbalizer
from adaprompt.textcore.dataset import LabeledExample
from adaprompt.textcore.sampling import DatasetSplit, sample_few_shot
from adaprompt.textcore.vocab import Vocab, build_vocab
from adaprompt.training.loop import classification_loss, train, trainable_partition
from adaprompt.training.regime import Regime, TuningMode


@pytest.fixture
def tiny_split(tiny_examples):
    test = (
        LabeledExample("the food was nice", "positive", "tiny"),
        LabeledExample("the hotel was awful", "negative", "tiny"),
    )
    return DatasetSplit(tuple(tiny_examples), test, 0)


def _fresh(classifier, with_layer=True):
    """A classifier with newly initialised weights from the same configs."""
    layer = None
    if with_layer:
        layer = init_prompt_layer(PromptGenConfig(d_model=16, d_hidden=8, s=2, seed=1))
    model = init_model(classifier.model.config)
    return PromptClassifier(
        model, classifier.vocab, classifier.prompt, classifier.verbalizer, layer
    )


# 1. Parameter partition


@pytest.mark.parametrize(
    "mode,with_layer,n_lm,n_layer",
    [
        (TuningMode.ZERO_SHOT, False, 0, 0),
        (TuningMode.HPL, False, 1, 0),
        (TuningMode.AP_FULL, True, 1, 1),
        (TuningMode.AP_FIXED_LM, True, 0, 1),
    ],
)
def test_trainable_partition(tiny_classifier, mode, with_layer, n_lm, n_layer):
    classifier = _fresh(tiny_classifier, with_layer)
    params = trainable_partition(classifier, Regime(mode))
    lm = classifier.model.parameters()
    layer = classifier.prompt_layer.parameters() if with_layer else []
    assert len(params) == n_lm * len(lm) + n_layer * len(layer)
    assert all(p.requires_grad is bool(n_lm) for p in lm)
    assert all(p.requires_grad for p in layer)


def test_adaptive_modes_need_a_layer(tiny_classifier):
    classifier = _fresh(tiny_classifier, with_layer=False)
    with pytest.raises(ConfigError):
        trainable_partition(classifier, Regime(TuningMode.AP_FIXED_LM))


def test_hand_crafted_modes_reject_a_layer(tiny_classifier):
    with pytest.raises(ConfigError):
        trainable_partition(tiny_classifier, Regime(TuningMode.HPL))


# 2. Loss


def test_unknown_label(tiny_classifier):
    with pytest.raises(LabelError):
        classification_loss(tiny_classifier, LabeledExample("the food", "neutral", "tiny"))


def test_equal_label_logits_give_ln2(tiny_classifier, tiny_vocab):
    table = tiny_classifier.model.params["embeddings.token"].data
    table[tiny_vocab.id_of("bad")] = table[tiny_vocab.id_of("good")]
    example = LabeledExample("the food was good", "positive", "tiny")
    loss = classification_loss(tiny_classifier, example)
    assert loss.item() == pytest.approx(np.log(2.0), abs=1e-12)


def test_end_to_end_grad_check():
    """Gradients of the classification loss wrt every LM and prompt-layer coordinate.

    d_model 16, one layer, a 50-token vocabulary, s=2 and a 5-token input.
    """
    vocab = Vocab(["it", "is", "good", "bad", *(f"w{i}" for i in range(41))])
    assert len(vocab) == 50
    config = MlmConfig(len(vocab), 16, 1, 2, 32, 32, dropout_rate=0.0, init_std=0.2)
    classifier = PromptClassifier(
        init_model(config),
        vocab,
        parse_prompt_spec("it is [MASK]", vocab),
        Verbalizer.from_mapping(DEFAULT_VERBALIZER, vocab),
        init_prompt_layer(PromptGenConfig(d_model=16, s=2, seed=1)),
    )
    example = LabeledExample("w0 w1 w2 w3 w4", "positive", "tiny")
    assert len(classifier.encode(example.text).ids) == 5
    params = trainable_partition(classifier, Regime(TuningMode.AP_FULL))

    def build():
        return classification_loss(classifier, example)

    assert grad_check(build, params, floor=1e-6) < 1e-4


# 3. Training


def test_zero_shot_only_evaluates(tiny_classifier, tiny_split):
    classifier = _fresh(tiny_classifier, with_layer=False)
    before = classifier.model.parameter_digest()
    history = train(classifier, tiny_split, Regime(TuningMode.ZERO_SHOT))
    assert history.records == []
    assert history.final_total == 2
    assert classifier.model.parameter_digest() == before


def test_fixed_lm_never_touches_the_lm(tiny_classifier, tiny_split):
    before_lm = tiny_classifier.model.parameter_digest()
    before_layer = [p.data.copy() for p in tiny_classifier.prompt_layer.parameters()]
    # 8 examples in batches of 4 over 50 epochs: 100 updates
    regime = Regime(TuningMode.AP_FIXED_LM, 1e-2, batch_size=4, epochs=50)
    history = train(tiny_classifier, tiny_split, regime)
    assert len(history.records) == 50
    assert tiny_classifier.model.parameter_digest() == before_lm
    after_layer = tiny_classifier.prompt_layer.parameters()
    assert any(not np.array_equal(a, b.data) for a, b in zip(before_layer, after_layer))


@pytest.mark.parametrize(
    "mode,prompt_rows_move,layer_moves",
    [
        (TuningMode.AP_FULL, True, True),
        (TuningMode.HPL, True, None),
        (TuningMode.AP_FIXED_LM, False, True),
    ],
)
def test_single_update_touches_only_the_regime_parameters(
    tiny_classifier, tiny_split, tiny_vocab, mode, prompt_rows_move, layer_moves
):
    """One batch of all 8 examples: the e(it), e(is) rows and the layer move per regime."""
    classifier = _fresh(tiny_classifier, with_layer=layer_moves is not None)
    rows = [tiny_vocab.id_of("it"), tiny_vocab.id_of("is")]
    table = classifier.model.params["embeddings.token"]
    rows_before = table.data[rows].copy()
    lm_before = classifier.model.parameter_digest()
    layer_before = []
    if classifier.prompt_layer is not None:
        layer_before = [p.data.copy() for p in classifier.prompt_layer.parameters()]

    train(classifier, tiny_split, Regime(mode, 1e-3, batch_size=8, epochs=1))

    row_changed = [not np.array_equal(old, table.data[row]) for old, row in zip(rows_before, rows)]
    if prompt_rows_move:
        assert all(row_changed)
    else:
        assert not any(row_changed)
        assert classifier.model.parameter_digest() == lm_before
    if layer_moves is None:
        assert classifier.prompt_layer is None
    else:
        after = classifier.prompt_layer.parameters()
        assert all(not np.array_equal(a, b.data) for a, b in zip(layer_before, after))


def test_ap_full_reaches_full_training_accuracy_on_32_examples():
    """32 hotel reviews, evaluated on the training set after AP_FULL tuning."""
    hotel = filter_domains(gen_synthetic_corpus(default_benchmark(n_per_domain=40)), ["hotel"])
    split = sample_few_shot(hotel, k_train=32, n_test=0, seed=0)
    assert len(split.train) == 32
    template_words = ["it", "is", *DEFAULT_VERBALIZER.values()]
    vocab = Vocab(dict.fromkeys([*build_vocab(split.train).to_list(), *template_words]))
    config = MlmConfig(len(vocab), 16, 1, 2, 32, 48, dropout_rate=0.0, init_std=0.2)
    classifier = PromptClassifier(
        init_model(config),
        vocab,
        parse_prompt_spec("it is [MASK]", vocab),
        Verbalizer.from_mapping(DEFAULT_VERBALIZER, vocab),
        init_prompt_layer(PromptGenConfig(d_model=16, d_hidden=8, s=2, seed=1)),
        max_len=24,
    )
    train(classifier, split, Regime(TuningMode.AP_FULL, 5e-3, batch_size=4, epochs=100))
    assert evaluate(classifier, split.train) == 1.0


def test_ap_full_memorises_a_small_split(tiny_classifier, tiny_split):
    regime = Regime(TuningMode.AP_FULL, 5e-3, batch_size=4, epochs=40)
    history = train(tiny_classifier, tiny_split, regime)
    losses = history.losses()
    assert len(losses) == 40
    assert losses[-1] < losses[0]
    assert np.mean(losses[-5:]) < 0.5 * np.mean(losses[:5])


def test_training_is_deterministic(tiny_classifier, tiny_split):
    runs = []
    for _ in range(2):
        classifier = _fresh(tiny_classifier)
        history = train(classifier, tiny_split, Regime(TuningMode.AP_FULL, 1e-3, 3, 3), seed=4)
        runs.append((history.losses(), classifier.model.parameter_digest()))
    assert runs[0] == runs[1]


def test_history_records_test_accuracy(tiny_classifier, tiny_split):
    history = train(tiny_classifier, tiny_split, Regime(TuningMode.AP_FULL, 1e-3, 5, 2))
    assert [r.epoch for r in history.records] == [1, 2]
    assert all(r.test_total == 2 for r in history.records)
    assert history.final_accuracy == history.records[-1].test_accuracy
    record = history.records[0].to_dict()
    assert set(record) == {"epoch", "train_loss", "test_accuracy", "monitors"}


def test_monitors_are_evaluated_each_epoch(tiny_classifier, tiny_split):
    monitor = [LabeledExample("service is good", "positive", "tiny")]
    history = train(
        tiny_classifier,
        tiny_split,
        Regime(TuningMode.AP_FULL, 1e-3, 4, 2),
        monitors={"extra": monitor},
    )
    assert all(set(r.monitors) == {"extra"} for r in history.records)


def test_empty_training_split(tiny_classifier):
    split = DatasetSplit((), (LabeledExample("good", "positive", "tiny"),), 0)
    with pytest.raises(EmptyInputError):
        train(tiny_classifier, split, Regime(TuningMode.AP_FULL))


def test_leaky_split_is_refused(tiny_classifier, tiny_examples):
    split = DatasetSplit(tuple(tiny_examples), (tiny_examples[0],), 0)
    with pytest.raises(SplitLeakError):
        train(tiny_classifier, split, Regime(TuningMode.AP_FULL, epochs=1))
