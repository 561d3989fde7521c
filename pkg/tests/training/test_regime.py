import numpy as np
import pytest

from adaprompt.diffcore.tensor import Tensor
from adaprompt.errors import ConfigError, ShapeError
from adaprompt.training.optim import AdamState, adam_step
from adaprompt.training.regime import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_EPOCHS,
    FIXED_LM_LR,
    FULL_TUNING_LR,
    Regime,
    TuningMode,
)


@pytest.mark.parametrize(
    "mode,trains_lm,uses_prompt_layer",
    [
        (TuningMode.ZERO_SHOT, False, False),
        (TuningMode.HPL, True, False),
        (TuningMode.AP_FULL, True, True),
        (TuningMode.AP_FIXED_LM, False, True),
    ],
)
def test_mode_partitions(mode, trains_lm, uses_prompt_layer):
    assert mode.trains_lm is trains_lm
    assert mode.uses_prompt_layer is uses_prompt_layer


def test_regime_defaults():
    regime = Regime(TuningMode.AP_FULL)
    assert regime.learning_rate == FULL_TUNING_LR
    assert regime.batch_size == DEFAULT_BATCH_SIZE
    assert regime.epochs == DEFAULT_EPOCHS
    assert Regime("ap_fixed_lm").learning_rate == FIXED_LM_LR


def test_with_mode_keeps_the_schedule():
    regime = Regime(TuningMode.AP_FULL, 3e-4, batch_size=2, epochs=7)
    hpl = regime.with_mode(TuningMode.HPL)
    assert (hpl.mode, hpl.learning_rate, hpl.batch_size, hpl.epochs) == (
        TuningMode.HPL,
        3e-4,
        2,
        7,
    )


def test_regime_dict_round_trip():
    regime = Regime(TuningMode.HPL, 1e-4, 4, 3)
    assert Regime.from_dict(regime.to_dict()) == regime


@pytest.mark.parametrize(
    "data",
    [
        {"learning_rate": 1e-3},
        {"mode": "prefix"},
        {"mode": "hpl", "momentum": 0.9},
        {"mode": "hpl", "batch_size": 0},
        {"mode": "hpl", "epochs": -1},
        {"mode": "hpl", "learning_rate": -1.0},
    ],
)
def test_invalid_regimes(data):
    """
    Test Regime.from_dict with:
        - no mode
        - an unknown mode
        - an unknown field
        - a zero batch size
        - negative epochs
        - a negative learning rate
    """
    with pytest.raises(ConfigError):
        Regime.from_dict(data)


# Adam


def _param(values):
    return Tensor(np.array(values, dtype=float), requires_grad=True)


def test_adam_zero_gradient_leaves_parameters():
    p = _param([1.0, -2.0, 3.0])
    state = AdamState.for_params([p])
    adam_step([p], [Tensor(np.zeros(3))], state, lr=0.1)
    np.testing.assert_array_equal(p.data, [1.0, -2.0, 3.0])
    assert state.step == 1


def test_adam_first_step_moves_by_lr():
    p = _param([1.0, -2.0, 3.0])
    state = AdamState.for_params([p])
    adam_step([p], [Tensor([0.5, -4.0, 0.1])], state, lr=0.01)
    np.testing.assert_allclose(p.data, [0.99, -1.99, 2.99], atol=1e-7)


def test_adam_is_deterministic():
    rng = np.random.default_rng(0)
    grads = [Tensor(rng.normal(size=4)) for _ in range(5)]
    results = []
    for _ in range(2):
        p = _param([0.1, 0.2, 0.3, 0.4])
        state = AdamState.for_params([p])
        for g in grads:
            adam_step([p], [g], state, lr=1e-2)
        results.append(p.data.copy())
    np.testing.assert_array_equal(results[0], results[1])


def test_adam_shape_mismatch():
    p = _param([1.0, 2.0])
    with pytest.raises(ShapeError):
        adam_step([p], [Tensor(np.zeros(3))], AdamState.for_params([p]), lr=0.1)
