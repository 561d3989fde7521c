import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from adaprompt.errors import CapacityError, SplitLeakError
from adaprompt.textcore.dataset import LabeledExample, text_digest

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[LabeledExample, ...]
    test: tuple[LabeledExample, ...]
    seed: int = field(default=0)


def audit_disjoint(train: Sequence[LabeledExample], test: Sequence[LabeledExample]) -> None:
    """Raise SplitLeakError when any test text also appears in train."""
    train_hashes = {text_digest(e.text) for e in train}
    leaked = sum(1 for e in test if text_digest(e.text) in train_hashes)
    if leaked:
        raise SplitLeakError(f"{leaked} test examples also appear in the training data")


def _label_quotas(labels: list[str], k_train: int) -> dict[str, int]:
    base, extra = divmod(k_train, len(labels))
    return {label: base + (1 if i < extra else 0) for i, label in enumerate(labels)}


def sample_few_shot(
    examples: Sequence[LabeledExample], k_train: int, n_test: int, seed: int
) -> DatasetSplit:
    """Draw a label-balanced training set and a disjoint test set.

    Labels share ``k_train`` as evenly as possible (earlier labels in sorted
    order take the remainder). Test examples are drawn from everything whose
    text does not occur in the training set. The draw depends only on the
    arguments.
    """
    by_label: dict[str, list[int]] = defaultdict(list)
    for i, example in enumerate(examples):
        by_label[example.label].append(i)
    labels = sorted(by_label)
    if len(labels) < 2:
        raise CapacityError(f"need at least two labels, found {labels}")

    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    for label, quota in _label_quotas(labels, k_train).items():
        pool = by_label[label]
        if len(pool) < quota:
            raise CapacityError(
                f"label {label!r} has {len(pool)} examples, {quota} needed for k_train={k_train}"
            )
        chosen = rng.permutation(len(pool))[:quota]
        train_idx.extend(pool[j] for j in chosen)
    train_idx.sort()

    train_texts = {examples[i].text for i in train_idx}
    chosen_set = set(train_idx)
    candidates = [
        i
        for i, e in enumerate(examples)
        if i not in chosen_set and e.text not in train_texts
    ]
    if len(candidates) < n_test:
        raise CapacityError(f"only {len(candidates)} examples left for n_test={n_test}")
    test_idx = sorted(candidates[j] for j in rng.permutation(len(candidates))[:n_test])

    split = DatasetSplit(
        train=tuple(examples[i] for i in train_idx),
        test=tuple(examples[i] for i in test_idx),
        seed=seed,
    )
    audit_disjoint(split.train, split.test)
    logger.debug("seed %d: sampled %d train / %d test", seed, len(split.train), len(split.test))
    return split
