import json

import numpy as np
import pytest

from adaprompt.cli.checkpoint import (
    MAGIC,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from adaprompt.diffcore.tensor import precision
from adaprompt.errors import IntegrityError, StorageError, VersionError
from adaprompt.experiments.evaluation import evaluate
from adaprompt.mlm.model import init_model
from adaprompt.promptgen.layer import PromptGenConfig, init_prompt_layer
from adaprompt.template.classifier import PromptClassifier
from adaprompt.template.prompt import parse_prompt_spec
from adaprompt.template.verbalizer import Verbalizer

TASK = {"pattern": "it is [MASK]", "verbalizer": {"positive": "good", "negative": "bad"}}


def _rewrite_manifest(data: bytes, **changes) -> bytes:
    """Return checkpoint bytes with manifest fields replaced and the payload kept."""
    start = len(MAGIC) + 8
    length = int.from_bytes(data[len(MAGIC) : start], "little")
    manifest = json.loads(data[start : start + length])
    for key, value in changes.items():
        if isinstance(value, dict) and isinstance(manifest.get(key), dict):
            manifest[key] = {**manifest[key], **value}
        else:
            manifest[key] = value
    header = json.dumps(manifest).encode("utf-8")
    return MAGIC + len(header).to_bytes(8, "little") + header + data[start + length :]


def _classifier(model, layer, vocab):
    return PromptClassifier(
        model,
        vocab,
        parse_prompt_spec(TASK["pattern"], vocab),
        Verbalizer.from_mapping(TASK["verbalizer"], vocab),
        layer,
    )


def test_float32_round_trip_is_bit_exact(tiny_config, tiny_vocab, tmp_path):
    path = tmp_path / "model.ckpt"
    with precision("float32"):
        model = init_model(tiny_config)
        layer = init_prompt_layer(PromptGenConfig(d_model=16, d_hidden=8, s=2, seed=1))
        digest = save_checkpoint(model, layer, tiny_vocab, path, task=TASK)
        loaded = load_checkpoint(path)

    assert loaded.digest == digest
    assert loaded.model.config == model.config
    assert loaded.prompt_layer.config == layer.config
    assert loaded.vocab.to_list() == tiny_vocab.to_list()
    assert loaded.task == TASK
    for (name, a), (other, b) in zip(model.named_parameters(), loaded.model.named_parameters()):
        assert name == other
        assert a.data.dtype == b.data.dtype == np.float32
        np.testing.assert_array_equal(a.data, b.data)
    for a, b in zip(layer.parameters(), loaded.prompt_layer.parameters()):
        np.testing.assert_array_equal(a.data, b.data)


def test_loaded_tensors_take_the_active_precision(tiny_model, tiny_vocab):
    data, _ = encode_checkpoint(tiny_model, None, tiny_vocab)
    loaded = decode_checkpoint(data)
    assert loaded.prompt_layer is None
    assert loaded.task is None
    assert all(p.data.dtype == np.float64 for p in loaded.model.parameters())


def test_encoding_is_deterministic(tiny_model, tiny_layer, tiny_vocab):
    first, digest = encode_checkpoint(tiny_model, tiny_layer, tiny_vocab, TASK)
    second, again = encode_checkpoint(tiny_model, tiny_layer, tiny_vocab, TASK)
    assert first == second
    assert digest == again
    tiny_model.params["embeddings.norm.bias"].data[0] += 1.0
    assert encode_checkpoint(tiny_model, tiny_layer, tiny_vocab, TASK)[1] != digest


@pytest.mark.parametrize(
    "corrupt",
    [
        lambda data: data[:-4],
        lambda data: data + b"\x00",
        lambda data: b"NOTACKPT" + data[8:],
        lambda data: data[:12],
        lambda data: data[:-1] + bytes([data[-1] ^ 0xFF]),
        lambda data: MAGIC + (10**6).to_bytes(8, "little") + data[16:],
    ],
)
def test_corrupt_checkpoints(tiny_model, tiny_layer, tiny_vocab, corrupt):
    """
    Test decode_checkpoint with:
        - a truncated payload
        - trailing bytes
        - a bad magic
        - a truncated header
        - a flipped payload byte
        - a manifest length past the end of the file
    """
    data, _ = encode_checkpoint(tiny_model, tiny_layer, tiny_vocab)
    with pytest.raises(IntegrityError):
        decode_checkpoint(corrupt(data))


def test_unknown_format_version(tiny_model, tiny_vocab):
    data, _ = encode_checkpoint(tiny_model, None, tiny_vocab)
    with pytest.raises(VersionError):
        decode_checkpoint(_rewrite_manifest(data, format_version=2))


def test_tensors_must_match_the_configuration(tiny_model, tiny_vocab):
    data, _ = encode_checkpoint(tiny_model, None, tiny_vocab)
    with pytest.raises(IntegrityError):
        decode_checkpoint(_rewrite_manifest(data, mlm_config={"d_ff": 64}))


def test_incomplete_manifest(tiny_model, tiny_vocab):
    data, _ = encode_checkpoint(tiny_model, None, tiny_vocab)
    with pytest.raises(IntegrityError):
        decode_checkpoint(_rewrite_manifest(data, vocab=None))


def test_missing_checkpoint_file(tmp_path):
    with pytest.raises(StorageError):
        load_checkpoint(tmp_path / "absent.ckpt")


def test_save_leaves_no_temporary_files(tiny_model, tiny_vocab, tmp_path):
    path = tmp_path / "nested" / "model.ckpt"
    save_checkpoint(tiny_model, None, tiny_vocab, path)
    save_checkpoint(tiny_model, None, tiny_vocab, path)
    assert [p.name for p in path.parent.iterdir()] == ["model.ckpt"]


def test_round_trip_preserves_evaluation(tiny_config, tiny_vocab, tiny_examples, tmp_path):
    """A reloaded checkpoint scores every example exactly as the saved classifier did."""
    path = tmp_path / "ap.ckpt"
    with precision("float32"):
        model = init_model(tiny_config)
        layer = init_prompt_layer(PromptGenConfig(d_model=16, d_hidden=8, s=2, seed=1))
        before = _classifier(model, layer, tiny_vocab)
        save_checkpoint(model, layer, tiny_vocab, path, task=TASK)
        loaded = load_checkpoint(path)
        after = _classifier(loaded.model, loaded.prompt_layer, loaded.vocab)

        assert evaluate(after, tiny_examples) == evaluate(before, tiny_examples)
        for example in tiny_examples:
            expected = before.posterior(example.text).probabilities
            np.testing.assert_array_equal(after.posterior(example.text).probabilities, expected)
