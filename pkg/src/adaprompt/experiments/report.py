import json
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from adaprompt.errors import ConfigError, EmptyInputError, SchemaError

REPORT_COLUMNS = ("prompt", "regime", "accuracy", "n_test", "seed", "setting")
TABLE_STYLE = "table"
JSONL_STYLE = "jsonl"


@dataclass(frozen=True)
class ReportRow:
    """One (configuration, seed) accuracy.

    ``setting`` separates rows of the same prompt/regime, such as large vs
    small data or a per-epoch held-out evaluation.
    """

    prompt: str
    regime: str
    accuracy: float
    n_test: int
    seed: int
    setting: str = ""

    @classmethod
    def from_counts(
        cls, prompt: str, regime: str, correct: int, n_test: int, seed: int, setting: str = ""
    ) -> "ReportRow":
        return cls(prompt, regime, correct / n_test, n_test, seed, setting)


@dataclass
class Report:
    protocol: str
    rows: list[ReportRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def select(self, regime: str | None = None, setting: str | None = None) -> list[ReportRow]:
        return [
            r
            for r in self.rows
            if (regime is None or r.regime == regime) and (setting is None or r.setting == setting)
        ]

    def mean_accuracy(self, regime: str | None = None, setting: str | None = None) -> float:
        rows = self.select(regime, setting)
        if not rows:
            raise EmptyInputError(f"no rows for regime={regime!r}, setting={setting!r}")
        return float(np.mean([r.accuracy for r in rows]))


@dataclass(frozen=True)
class SummaryRow:
    prompt: str
    regime: str
    setting: str
    mean: float
    std: float
    n_seeds: int


def round_half_up(value: float, places: int = 3) -> str:
    quantum = Decimal(1).scaleb(-places)
    return str(Decimal(str(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def summarize(report: Report) -> list[SummaryRow]:
    """Mean and population std of accuracy per (prompt, regime, setting), in first-seen order."""
    groups: dict[tuple[str, str, str], list[float]] = defaultdict(list)
    for row in report.rows:
        groups[(row.prompt, row.regime, row.setting)].append(row.accuracy)
    return [
        SummaryRow(prompt, regime, setting, float(np.mean(accs)), float(np.std(accs)), len(accs))
        for (prompt, regime, setting), accs in groups.items()
    ]


def _table(header: list[str], lines: list[list[str]]) -> str:
    widths = [max(len(h), *(len(line[i]) for line in lines)) for i, h in enumerate(header)]
    rendered = [header] + lines
    return "\n".join(
        "  ".join(cell.ljust(width) for cell, width in zip(line, widths)).rstrip()
        for line in rendered
    )


def format_report(report: Report, style: str = TABLE_STYLE) -> str:
    """Render ``report`` as an aligned text table or as one JSON object per row.

    :param style: ``"table"`` or ``"jsonl"``.
    """
    if not report.rows:
        raise EmptyInputError("Cannot format an empty report")
    if style == JSONL_STYLE:
        return "\n".join(
            json.dumps({"protocol": report.protocol, **asdict(row)}) for row in report.rows
        )
    if style != TABLE_STYLE:
        raise ConfigError(f"Unknown report style {style!r}; use {TABLE_STYLE!r} or {JSONL_STYLE!r}")
    lines = [
        [
            row.prompt,
            row.regime,
            round_half_up(row.accuracy),
            str(row.n_test),
            str(row.seed),
            row.setting,
        ]
        for row in report.rows
    ]
    return _table(list(REPORT_COLUMNS), lines)


def format_summary(summary: list[SummaryRow]) -> str:
    if not summary:
        raise EmptyInputError("Cannot format an empty summary")
    lines = [
        [
            s.prompt,
            s.regime,
            s.setting,
            f"{round_half_up(s.mean)} +/- {round_half_up(s.std)}",
            str(s.n_seeds),
        ]
        for s in summary
    ]
    return _table(["prompt", "regime", "setting", "accuracy", "seeds"], lines)


def parse_report(text: str) -> Report:
    """Parse the ``jsonl`` form produced by :func:`format_report`."""
    protocol = None
    rows = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            protocol = record.pop("protocol")
            rows.append(ReportRow(**record))
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise SchemaError(f"not a report row: {e}", line_number) from e
    if not rows:
        raise EmptyInputError("report text has no rows")
    return Report(protocol, rows)


def format_margins(margins: dict[str, float]) -> str:
    """Render named accuracy gaps, one per line."""
    if not margins:
        raise EmptyInputError("Cannot format an empty set of margins")
    lines = [[name, round_half_up(value)] for name, value in margins.items()]
    return _table(["margin", "value"], lines)
