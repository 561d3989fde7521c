"""Few-shot training through the cloze template."""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from tqdm import tqdm

from adaprompt.diffcore import ops
from adaprompt.diffcore.graph import ComputeGraph, backward
from adaprompt.diffcore.tensor import Tensor
from adaprompt.errors import ConfigError, EmptyInputError, FreezeViolationError
from adaprompt.experiments.evaluation import evaluate_counts
from adaprompt.template.classifier import PromptClassifier
from adaprompt.textcore.dataset import LabeledExample
from adaprompt.textcore.sampling import DatasetSplit, audit_disjoint
from adaprompt.training.optim import AdamState, adam_step
from adaprompt.training.regime import Regime, TuningMode
from adaprompt.utils.config import show_progress

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    test_correct: int | None = None
    test_total: int | None = None
    monitors: dict[str, float] = field(default_factory=dict)

    @property
    def test_accuracy(self) -> float | None:
        if not self.test_total:
            return None
        return self.test_correct / self.test_total

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "test_accuracy": self.test_accuracy,
            "monitors": dict(self.monitors),
        }


@dataclass
class TrainHistory:
    """One record per completed epoch, plus the final test counts."""

    mode: TuningMode
    records: list[EpochRecord] = field(default_factory=list)
    final_correct: int | None = None
    final_total: int | None = None

    @property
    def final_accuracy(self) -> float | None:
        if not self.final_total:
            return None
        return self.final_correct / self.final_total

    def losses(self) -> list[float]:
        return [r.train_loss for r in self.records]


def classification_loss(
    classifier: PromptClassifier,
    example: LabeledExample,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Cross-entropy of the gold label under the verbalizer-restricted softmax at [MASK]."""
    target = classifier.verbalizer.index_of(example.label)
    logits = classifier.label_logits(classifier.encode(example.text), train_mode, rng)
    return ops.cross_entropy_from_logits(logits, [target])


def trainable_partition(classifier: PromptClassifier, regime: Regime) -> list[Tensor]:
    """Flag the regime's parameters trainable, freeze the rest, and return the trainable ones."""
    mode = regime.mode
    layer = classifier.prompt_layer
    if mode.uses_prompt_layer and layer is None:
        raise ConfigError(f"{mode.value} needs an adaptive prompt layer")
    if not mode.uses_prompt_layer and layer is not None:
        raise ConfigError(f"{mode.value} uses the hand-crafted template; it takes no prompt layer")

    classifier.model.set_trainable(mode.trains_lm)
    params = classifier.model.parameters() if mode.trains_lm else []
    if layer is not None:
        layer.set_trainable(True)
        params = params + layer.parameters()
    return params


def _frozen_digest(classifier: PromptClassifier, trainable: Sequence[Tensor]) -> str:
    trainable_ids = {id(p) for p in trainable}
    digest = hashlib.sha256()
    for _, p in classifier.model.named_parameters():
        if id(p) not in trainable_ids:
            digest.update(np.ascontiguousarray(p.data).tobytes())
    return digest.hexdigest()


def _monitor_accuracies(
    classifier: PromptClassifier, monitors: Mapping[str, Sequence[LabeledExample]]
) -> dict[str, float]:
    results = {}
    for name, examples in monitors.items():
        correct, total = evaluate_counts(classifier, examples, desc=name)
        results[name] = correct / total
    return results


def train(
    classifier: PromptClassifier,
    split: DatasetSplit,
    regime: Regime,
    seed: int = 0,
    monitors: Mapping[str, Sequence[LabeledExample]] | None = None,
) -> TrainHistory:
    """Tune the regime's parameters on ``split.train``, evaluating ``split.test`` after each epoch.

    Args:
        classifier: Model, template and verbalizer; trained in place.
        split: Training examples and the test set reported per epoch.
        regime: Mode, learning rate, batch size and epoch count.
        seed: Seeds shuffling and dropout.
        monitors: Extra named test sets evaluated after every epoch.

    Returns:
        TrainHistory: Per-epoch loss and accuracy records.
    """
    regime.validate()
    monitors = monitors or {}
    params = trainable_partition(classifier, regime)
    history = TrainHistory(regime.mode)

    if regime.mode is TuningMode.ZERO_SHOT:
        if split.test:
            history.final_correct, history.final_total = evaluate_counts(classifier, split.test)
        return history

    if not split.train:
        raise EmptyInputError(f"{regime.mode.value} needs a non-empty training split")
    audit_disjoint(split.train, split.test)
    for monitor in monitors.values():
        audit_disjoint(split.train, monitor)

    targets = [classifier.verbalizer.index_of(e.label) for e in split.train]
    inputs = [classifier.encode(e.text) for e in split.train]
    frozen_before = _frozen_digest(classifier, params)

    rng = np.random.default_rng(seed)
    optimizer = AdamState.for_params(params)
    epochs = range(1, regime.epochs + 1)
    for epoch in tqdm(epochs, desc=regime.mode.value, disable=not show_progress()):
        order = rng.permutation(len(inputs))
        batch_losses = []
        for start in range(0, len(order), regime.batch_size):
            batch = order[start : start + regime.batch_size]
            with ComputeGraph() as graph:
                losses = [
                    ops.cross_entropy_from_logits(
                        classifier.label_logits(inputs[i], train_mode=True, rng=rng), [targets[i]]
                    )
                    for i in batch
                ]
                loss = ops.average(losses)
            grads = backward(graph, loss)
            adam_step(params, graph.gradients_for(grads, params), optimizer, regime.learning_rate)
            batch_losses.append(float(loss.data))
            logger.debug(
                "epoch %d batch %d: loss %.4f", epoch, start // regime.batch_size, batch_losses[-1]
            )

        correct = total = None
        if split.test:
            correct, total = evaluate_counts(classifier, split.test)
        record = EpochRecord(
            epoch,
            float(np.mean(batch_losses)),
            correct,
            total,
            _monitor_accuracies(classifier, monitors),
        )
        history.records.append(record)
        logger.info(
            "%s epoch %d/%d: loss %.4f, test accuracy %s",
            regime.mode.value,
            epoch,
            regime.epochs,
            record.train_loss,
            "n/a" if record.test_accuracy is None else f"{record.test_accuracy:.3f}",
        )

    if _frozen_digest(classifier, params) != frozen_before:
        raise FreezeViolationError(f"frozen LM parameters changed during {regime.mode.value}")
    if history.records:
        history.final_correct = history.records[-1].test_correct
        history.final_total = history.records[-1].test_total
    elif split.test:
        history.final_correct, history.final_total = evaluate_counts(classifier, split.test)
    return history
