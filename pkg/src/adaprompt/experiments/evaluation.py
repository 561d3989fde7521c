from typing import Sequence

from tqdm import tqdm

from adaprompt.errors import EmptyInputError
from adaprompt.template.classifier import PromptClassifier
from adaprompt.textcore.dataset import LabeledExample
from adaprompt.utils.config import show_progress


def evaluate_counts(
    classifier: PromptClassifier, test: Sequence[LabeledExample], desc: str = "eval"
) -> tuple[int, int]:
    """Count correct predictions; runs in eval mode with no graph recording.

    Returns:
        tuple: (correct, total)
    """
    if not test:
        raise EmptyInputError("Cannot evaluate on an empty test set")
    correct = 0
    for example in tqdm(test, desc=desc, leave=False, disable=not show_progress()):
        if classifier.predict(example.text) == example.label:
            correct += 1
    return correct, len(test)


def evaluate(classifier: PromptClassifier, test: Sequence[LabeledExample]) -> float:
    """Fraction of ``test`` whose predicted label equals the gold label."""
    correct, total = evaluate_counts(classifier, test)
    return correct / total
