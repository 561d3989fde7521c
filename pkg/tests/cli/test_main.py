import json

import numpy as np
import pytest

from adaprompt.cli.checkpoint import load_checkpoint
from adaprompt.cli.main import main
from adaprompt.experiments.report import parse_report
from adaprompt.textcore.dataset import load_dataset

MODEL = {
    "d_model": 16,
    "n_layers": 1,
    "n_heads": 2,
    "d_ff": 32,
    "max_positions": 48,
    "dropout_rate": 0.0,
}


def _write_json(path, data):
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


@pytest.fixture
def workspace(tmp_path):
    """A small synthetic dataset and an MLM checkpoint pretrained on it."""
    data = str(tmp_path / "data.jsonl")
    base = str(tmp_path / "base.ckpt")
    model_config = _write_json(tmp_path / "model.json", MODEL)
    assert main(["--seed", "0", "synth-data", "--out", data, "--n-per-domain", "40"]) == 0
    argv = ["pretrain-mlm", "--data", data, "--out", base, "--model-config", model_config]
    assert main([*argv, "--epochs", "1", "--max-len", "16"]) == 0
    return tmp_path


def _run_config(workspace, **overrides):
    config = {
        "regime": {"mode": "ap_full", "learning_rate": 1e-3, "batch_size": 4, "epochs": 2},
        "prompt_layer": {"s": 2, "d_hidden": 8},
        "train_path": str(workspace / "data.jsonl"),
        "k_train": 4,
        "n_test": 6,
        "max_len": 16,
        "precision": "float64",
        **overrides,
    }
    return _write_json(workspace / "run.json", config)


@pytest.mark.parametrize(
    "argv",
    [
        ["frobnicate"],
        ["train"],
        ["--precision", "float16", "synth-data", "--out", "x.jsonl"],
        ["experiment", "--spec", "missing.json"],
    ],
)
def test_usage_errors(argv):
    """
    Test main with:
        - an unknown command
        - missing required options
        - an unsupported precision
        - a missing spec file
    """
    assert main(argv) == 2


def test_synth_data_writes_a_balanced_corpus(tmp_path, capsys):
    out = tmp_path / "corpus.jsonl"
    assert main(["synth-data", "--out", str(out), "--n-per-domain", "10"]) == 0
    examples = load_dataset(out)
    assert len(examples) == 50
    assert sum(e.label == "positive" for e in examples) == 25
    assert "wrote 50 examples" in capsys.readouterr().out


def test_pretrain_writes_a_backbone_checkpoint(workspace):
    checkpoint = load_checkpoint(workspace / "base.ckpt")
    assert checkpoint.prompt_layer is None
    assert checkpoint.model.config.d_model == 16
    assert len(checkpoint.vocab) == checkpoint.model.config.vocab_size


def test_train_eval_predict(workspace, capsys):
    trained = str(workspace / "ap.ckpt")
    history = workspace / "history.jsonl"
    argv = ["train", "--config", _run_config(workspace), "--checkpoint"]
    argv += [str(workspace / "base.ckpt"), "--out", trained, "--history", str(history)]
    assert main(argv) == 0
    out = capsys.readouterr().out
    assert "ap_full test accuracy" in out
    assert "/6)" in out

    records = [json.loads(line) for line in history.read_text().splitlines()]
    assert [r["epoch"] for r in records] == [1, 2]
    checkpoint = load_checkpoint(trained)
    assert checkpoint.prompt_layer.config.s == 2
    assert checkpoint.task["pattern"] == "it is [MASK]"

    data = str(workspace / "data.jsonl")
    assert main(["eval", "--checkpoint", trained, "--data", data]) == 0
    assert capsys.readouterr().out.strip().endswith("/200)")

    assert main(["predict", "--checkpoint", trained, "--text", "the food was good"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] in ("positive", "negative")
    posterior = dict(line.split("\t") for line in lines[1:])
    assert set(posterior) == {"positive", "negative"}
    assert sum(float(p) for p in posterior.values()) == pytest.approx(1.0, abs=1e-5)


def test_eval_counts_the_whole_dataset(workspace, capsys):
    data = str(workspace / "data.jsonl")
    argv = ["eval", "--checkpoint", str(workspace / "base.ckpt"), "--data", data]
    assert main(argv) == 0
    assert capsys.readouterr().out.strip().endswith("/200)")


def test_adaptive_regime_needs_a_prompt_layer(workspace, capsys):
    config = _run_config(workspace, prompt_layer=None)
    argv = ["train", "--config", config, "--checkpoint", str(workspace / "base.ckpt")]
    assert main([*argv, "--out", str(workspace / "ap.ckpt")]) == 1
    assert "prompt_layer" in capsys.readouterr().err
    assert not (workspace / "ap.ckpt").exists()


def _train(workspace, config, source, out):
    argv = ["train", "--config", config, "--checkpoint", str(workspace / source)]
    return main([*argv, "--out", str(workspace / out)])


def test_training_continues_from_the_checkpoint_prompt_layer(workspace):
    assert _train(workspace, _run_config(workspace), "base.ckpt", "ap1.ckpt") == 0
    regime = {"mode": "ap_full", "learning_rate": 1e-3, "batch_size": 4, "epochs": 0}
    assert _train(workspace, _run_config(workspace, regime=regime), "ap1.ckpt", "ap2.ckpt") == 0

    first = load_checkpoint(workspace / "ap1.ckpt").prompt_layer
    second = load_checkpoint(workspace / "ap2.ckpt").prompt_layer
    assert second.config == first.config
    for (name, a), (_, b) in zip(first.named_parameters(), second.named_parameters()):
        np.testing.assert_array_equal(a.data, b.data, err_msg=name)


def test_prompt_layer_shape_must_match_the_checkpoint(workspace, capsys):
    assert _train(workspace, _run_config(workspace), "base.ckpt", "ap1.ckpt") == 0
    config = _run_config(workspace, prompt_layer={"s": 3, "d_hidden": 8})
    assert _train(workspace, config, "ap1.ckpt", "ap2.ckpt") == 1
    assert "prompt_layer" in capsys.readouterr().err
    assert not (workspace / "ap2.ckpt").exists()


def test_hpl_training_keeps_no_prompt_layer(workspace):
    regime = {"mode": "hpl", "learning_rate": 1e-3, "batch_size": 4, "epochs": 1}
    config = _run_config(workspace, regime=regime, prompt_layer=None)
    trained = workspace / "hpl.ckpt"
    argv = ["train", "--config", config, "--checkpoint", str(workspace / "base.ckpt")]
    assert main([*argv, "--out", str(trained)]) == 0
    assert load_checkpoint(trained).prompt_layer is None


def test_experiment_reports_are_reproducible(tmp_path, capsys):
    spec = {
        "protocol": "compare_prompts",
        "model": MODEL,
        "prompt_layer": {"s": 2, "d_hidden": 8},
        "regime": {"learning_rate": 1e-3, "batch_size": 4, "epochs": 1},
        "synthetic": {"n_per_domain": 40, "seed": 0},
        "target_domain": "hotel",
        "seeds": [0, 1],
        "k_train": 4,
        "n_test": 6,
        "max_len": 16,
        "pretrain": {"epochs": 0},
    }
    spec_path = _write_json(tmp_path / "spec.json", spec)
    outputs = []
    for name in ("a.jsonl", "b.jsonl"):
        out = tmp_path / name
        argv = ["--seed", "3", "experiment", "--spec", spec_path, "--format", "jsonl"]
        assert main([*argv, "--out", str(out)]) == 0
        outputs.append(out.read_text())
    assert outputs[0] == outputs[1]
    report = parse_report(outputs[0])
    assert report.protocol == "compare_prompts"
    assert [r.seed for r in report.select("hpl")] == [3, 4]

    assert main(["experiment", "--spec", spec_path]) == 0
    table = capsys.readouterr().out
    assert "zero_shot" in table and "+/-" in table
    assert "ap_full - zero_shot" in table
