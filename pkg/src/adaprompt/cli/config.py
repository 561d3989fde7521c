import json
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path

from adaprompt.errors import ConfigError, StorageError
from adaprompt.promptgen.layer import PromptGenConfig
from adaprompt.template.verbalizer import DEFAULT_VERBALIZER
from adaprompt.textcore.vocab import DEFAULT_MAX_LEN, MASK
from adaprompt.training.regime import Regime, TuningMode
from adaprompt.utils.config import DEFAULT_PRECISION

logger = logging.getLogger(__name__)

PRECISIONS = ("float32", "float64")


@dataclass
class RunConfig:
    """One ``train`` run.

    Attributes:
        prompt_layer: PromptGenConfig fields (``d_model`` is taken from the
            checkpoint's model); required by the AP regimes.
        train_path: Dataset the few-shot split is drawn from.
        test_path: Optional separate test set; otherwise the test split is
            drawn from ``train_path`` as well.
    """

    regime: Regime
    prompt_layer: dict | None = None
    pattern: str = f"it is {MASK}"
    verbalizer: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_VERBALIZER))
    train_path: str | None = None
    test_path: str | None = None
    k_train: int = 32
    n_test: int = 600
    seed: int = 0
    precision: str = DEFAULT_PRECISION
    max_len: int = DEFAULT_MAX_LEN

    def validate(self, d_model: int | None = None) -> None:
        """Check cross-field consistency.

        :param d_model: Width of the model the run will attach to, when known.
        """
        self.regime.validate()
        if self.regime.mode.uses_prompt_layer and self.prompt_layer is None:
            raise ConfigError(f"{self.regime.mode.value} needs a prompt_layer configuration")
        if self.prompt_layer is not None:
            declared = self.prompt_layer.get("d_model")
            if d_model is not None and declared is not None and declared != d_model:
                raise ConfigError(f"prompt_layer d_model {declared} != model d_model {d_model}")
            PromptGenConfig.from_dict({**self.prompt_layer, "d_model": d_model or 1}).validate()
        if self.precision not in PRECISIONS:
            raise ConfigError(f"precision must be one of {PRECISIONS}, got {self.precision!r}")
        if self.train_path is None:
            raise ConfigError("train_path is required")
        if self.k_train < 1 or self.n_test < 0 or self.max_len < 1:
            raise ConfigError("k_train and max_len must be positive, n_test non-negative")

    def prompt_config(self, d_model: int) -> PromptGenConfig:
        return PromptGenConfig.from_dict({**self.prompt_layer, "d_model": d_model})

    def task(self) -> dict:
        """The part of the config a checkpoint needs to classify on its own."""
        return {
            "pattern": self.pattern,
            "verbalizer": dict(self.verbalizer),
            "max_len": self.max_len,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown run config fields: {sorted(unknown)}")
        regime = data.get("regime", {"mode": TuningMode.AP_FULL.value})
        return cls(**{**data, "regime": Regime.from_dict(regime)})


def load_run_config(path: str | Path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        logger.error(f"Error reading run config {path}: {e}")
        raise StorageError(f"cannot read run config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"run config {path} is not valid JSON: {e}") from e
    return RunConfig.from_dict(data)
