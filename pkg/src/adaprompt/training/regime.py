from dataclasses import asdict, dataclass, fields
from enum import Enum

from adaprompt.errors import ConfigError


class TuningMode(str, Enum):
    ZERO_SHOT = "zero_shot"
    HPL = "hpl"
    AP_FULL = "ap_full"
    AP_FIXED_LM = "ap_fixed_lm"

    @property
    def trains_lm(self) -> bool:
        return self in (TuningMode.HPL, TuningMode.AP_FULL)

    @property
    def uses_prompt_layer(self) -> bool:
        return self in (TuningMode.AP_FULL, TuningMode.AP_FIXED_LM)


# Learning rates per protocol
FULL_TUNING_LR = 1e-5
MIGRATION_LR = 2e-6
PRE_AP_LR = 5e-6
FIXED_LM_LR = 1e-3

DEFAULT_LEARNING_RATES = {
    TuningMode.ZERO_SHOT: 0.0,
    TuningMode.HPL: FULL_TUNING_LR,
    TuningMode.AP_FULL: FULL_TUNING_LR,
    TuningMode.AP_FIXED_LM: FIXED_LM_LR,
}
DEFAULT_BATCH_SIZE = 5
DEFAULT_EPOCHS = 20


@dataclass
class Regime:
    """Which parameters a run tunes, and how.

    Attributes:
        mode: ZERO_SHOT trains nothing, HPL the LM, AP_FULL the LM and the prompt
            layer, AP_FIXED_LM the prompt layer only.
        learning_rate: Adam step size; defaults to the mode's entry in
            ``DEFAULT_LEARNING_RATES``.
        batch_size: Examples per update; the last partial batch is kept.
        epochs: Passes over the training split.
    """

    mode: TuningMode
    learning_rate: float | None = None
    batch_size: int = DEFAULT_BATCH_SIZE
    epochs: int = DEFAULT_EPOCHS

    def __post_init__(self):
        self.mode = TuningMode(self.mode)
        if self.learning_rate is None:
            self.learning_rate = DEFAULT_LEARNING_RATES[self.mode]

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")

    def with_mode(self, mode: TuningMode) -> "Regime":
        """Same schedule under another mode; the learning rate carries over."""
        return Regime(mode, self.learning_rate, self.batch_size, self.epochs)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["mode"] = self.mode.value
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "Regime":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown Regime fields: {sorted(unknown)}")
        if "mode" not in data:
            raise ConfigError("Regime needs a mode")
        try:
            mode = TuningMode(data["mode"])
        except ValueError:
            raise ConfigError(
                f"Unknown tuning mode {data['mode']!r}; use one of {[m.value for m in TuningMode]}"
            ) from None
        regime = cls(**{**data, "mode": mode})
        regime.validate()
        return regime
