"""Single-file checkpoints.

Layout: ``MAGIC`` (8 bytes), manifest length (8 bytes, little-endian), the
manifest as UTF-8 JSON, then the payload: every tensor as little-endian
float32, concatenated in manifest order. The manifest records the payload's
SHA-256 digest.
"""

import hashlib
import json
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from adaprompt.diffcore.tensor import Tensor, get_dtype
from adaprompt.errors import IntegrityError, StorageError, VersionError
from adaprompt.mlm.model import MlmConfig, MlmModel
from adaprompt.mlm.model import parameter_shapes as mlm_parameter_shapes
from adaprompt.promptgen.layer import PromptGenConfig, PromptGenLayer
from adaprompt.promptgen.layer import parameter_shapes as layer_parameter_shapes
from adaprompt.textcore.vocab import Vocab

logger = logging.getLogger(__name__)

MAGIC = b"ADAPCKPT"
FORMAT_VERSION = 1
PAYLOAD_DTYPE = np.dtype("<f4")
_LENGTH_BYTES = 8


@dataclass
class Checkpoint:
    """A loaded checkpoint.

    Attributes:
        task: Optional prompt pattern, verbalizer and max_len saved by ``train``.
    """

    model: MlmModel
    prompt_layer: PromptGenLayer | None
    vocab: Vocab
    task: dict | None
    digest: str


def calculate_checksum(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()


def _tensor_groups(model: MlmModel, prompt_layer: PromptGenLayer | None):
    groups = [("mlm", model.named_parameters())]
    if prompt_layer is not None:
        groups.append(("prompt_layer", prompt_layer.named_parameters()))
    return groups


def encode_checkpoint(
    model: MlmModel,
    prompt_layer: PromptGenLayer | None,
    vocab: Vocab,
    task: dict | None = None,
) -> tuple[bytes, str]:
    """Serialize to bytes; identical inputs give identical bytes.

    Returns:
        tuple: (file bytes, payload digest)
    """
    directory, chunks, offset = [], [], 0
    for group, named in _tensor_groups(model, prompt_layer):
        for name, tensor in named:
            chunk = np.ascontiguousarray(tensor.data, dtype=PAYLOAD_DTYPE).tobytes()
            directory.append(
                {
                    "group": group,
                    "name": name,
                    "shape": list(tensor.shape),
                    "offset": offset,
                    "nbytes": len(chunk),
                }
            )
            chunks.append(chunk)
            offset += len(chunk)
    payload = b"".join(chunks)
    digest = calculate_checksum(payload)
    manifest = {
        "format_version": FORMAT_VERSION,
        "mlm_config": model.config.to_dict(),
        "prompt_config": prompt_layer.config.to_dict() if prompt_layer is not None else None,
        "vocab": vocab.to_list(),
        "tensors": directory,
        "task": task,
        "digest": digest,
    }
    header = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + len(header).to_bytes(_LENGTH_BYTES, "little") + header + payload, digest


def save_checkpoint(
    model: MlmModel,
    prompt_layer: PromptGenLayer | None,
    vocab: Vocab,
    path: str | Path,
    task: dict | None = None,
) -> str:
    """Write a checkpoint atomically (temp file + rename) and return its digest."""
    data, digest = encode_checkpoint(model, prompt_layer, vocab, task)
    path = Path(path)
    tmp_name = None
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=path.parent, delete=False, suffix=".tmp") as f:
            tmp_name = f.name
            f.write(data)
        os.replace(tmp_name, path)
    except OSError as e:
        logging.error(f"Error writing checkpoint {path}: {e}")
        if tmp_name is not None and os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise StorageError(f"cannot write checkpoint {path}: {e}") from e
    logger.info("Saved checkpoint %s (%d bytes, digest %s)", path, len(data), digest[:12])
    return digest


def _read_manifest(data: bytes) -> tuple[dict, bytes]:
    if not data.startswith(MAGIC):
        raise IntegrityError("not a checkpoint file (bad magic)")
    start = len(MAGIC) + _LENGTH_BYTES
    if len(data) < start:
        raise IntegrityError("checkpoint header is truncated")
    length = int.from_bytes(data[len(MAGIC) : start], "little")
    if len(data) < start + length:
        raise IntegrityError("checkpoint manifest is truncated")
    try:
        manifest = json.loads(data[start : start + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise IntegrityError(f"checkpoint manifest is unreadable: {e}") from e
    return manifest, data[start + length :]


def _rebuild(
    directory: list[dict], payload: bytes, group: str, expected: list[tuple[str, tuple]]
) -> dict[str, Tensor]:
    entries = [e for e in directory if e["group"] == group]
    if [(e["name"], tuple(e["shape"])) for e in entries] != expected:
        raise IntegrityError(f"{group} tensors do not match the configuration")
    dtype = get_dtype()
    params = {}
    for entry in entries:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        array = np.frombuffer(payload, dtype=PAYLOAD_DTYPE, count=count, offset=entry["offset"])
        params[entry["name"]] = Tensor(
            array.reshape(entry["shape"]).astype(dtype), requires_grad=True, name=entry["name"]
        )
    return params


def decode_checkpoint(data: bytes) -> Checkpoint:
    manifest, payload = _read_manifest(data)
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionError(f"checkpoint format version {version!r}, expected {FORMAT_VERSION}")
    digest = calculate_checksum(payload)
    if digest != manifest.get("digest"):
        raise IntegrityError("checkpoint payload digest mismatch")

    try:
        directory = manifest["tensors"]
        expected_offset = 0
        for entry in directory:
            count = int(np.prod(entry["shape"], dtype=np.int64))
            if entry["nbytes"] != PAYLOAD_DTYPE.itemsize * count:
                raise IntegrityError(f"tensor {entry['name']!r}: byte length disagrees with shape")
            if entry["offset"] != expected_offset:
                raise IntegrityError(f"tensor {entry['name']!r}: unexpected offset")
            expected_offset += entry["nbytes"]
        if expected_offset != len(payload):
            raise IntegrityError("payload length disagrees with the manifest")

        mlm_config = MlmConfig.from_dict(manifest["mlm_config"])
        mlm_shapes = [(name, shape) for name, shape, _ in mlm_parameter_shapes(mlm_config)]
        model = MlmModel(mlm_config, _rebuild(directory, payload, "mlm", mlm_shapes))

        prompt_layer = None
        if manifest.get("prompt_config") is not None:
            prompt_config = PromptGenConfig.from_dict(manifest["prompt_config"])
            layer_shapes = layer_parameter_shapes(prompt_config)
            prompt_layer = PromptGenLayer(
                prompt_config, _rebuild(directory, payload, "prompt_layer", layer_shapes)
            )
        vocab = Vocab.from_list(manifest["vocab"])
    except IntegrityError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise IntegrityError(f"checkpoint manifest is incomplete: {e}") from e
    return Checkpoint(model, prompt_layer, vocab, manifest.get("task"), digest)


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        logging.error(f"Error reading checkpoint {path}: {e}")
        raise StorageError(f"cannot read checkpoint {path}: {e}") from e
    checkpoint = decode_checkpoint(data)
    logger.info("Loaded checkpoint %s (digest %s)", path, checkpoint.digest[:12])
    return checkpoint
