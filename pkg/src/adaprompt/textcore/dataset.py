import hashlib
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

from adaprompt.errors import DatasetParseError, SchemaError, StorageError

logger = logging.getLogger(__name__)

FIELDS = ("text", "label", "domain")


@dataclass(frozen=True)
class LabeledExample:
    text: str
    label: str
    domain: str


def text_digest(text: str) -> str:
    """SHA-256 of an example text, used for split-hygiene audits."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _parse_record(line: str, line_number: int) -> LabeledExample:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as e:
        raise DatasetParseError(f"invalid JSON ({e.msg})", line_number) from e
    if not isinstance(record, dict):
        raise DatasetParseError("record is not an object", line_number)
    for field in FIELDS:
        if field not in record:
            raise SchemaError(f"missing field {field!r}", line_number)
        if not isinstance(record[field], str):
            raise SchemaError(f"field {field!r} must be a string", line_number)
    if not record["domain"]:
        raise SchemaError("field 'domain' must be non-empty", line_number)
    return LabeledExample(record["text"], record["label"], record["domain"])


def load_dataset(path: str | Path) -> list[LabeledExample]:
    """Read a UTF-8 file with one JSON object (text, label, domain) per line.

    Blank lines are skipped; line numbers in errors are 1-based.
    """
    path = Path(path)
    try:
        content = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        logger.error(f"Error reading dataset {path}: {e}")
        raise StorageError(f"cannot read dataset {path}: {e}") from e

    examples = []
    for line_number, line in enumerate(content.splitlines(), start=1):
        if line.strip():
            examples.append(_parse_record(line, line_number))
    logger.info("Loaded %d examples from %s", len(examples), path)
    return examples


def save_dataset(examples: Iterable[LabeledExample], path: str | Path) -> int:
    """Write examples as line-delimited JSON; returns the number written."""
    path = Path(path)
    lines = [json.dumps(asdict(e), ensure_ascii=False) for e in examples]
    try:
        path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    except OSError as e:
        logger.error(f"Error writing dataset {path}: {e}")
        raise StorageError(f"cannot write dataset {path}: {e}") from e
    return len(lines)
