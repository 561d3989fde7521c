"""The four experiment protocols.

Every protocol starts from the same backbone: a corpus, a vocabulary built on
it, and a stand-in masked LM pretrained on all of its text. Each seed then runs
on its own copy of the backbone model, so seeds can execute in parallel and the
report is a pure function of (spec, seeds).
"""

import json
import logging
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np
from joblib import Parallel, delayed

from adaprompt.diffcore.tensor import precision, precision_name
from adaprompt.errors import (
    ConfigError,
    EmptyInputError,
    FreezeViolationError,
    SpecError,
    SplitLeakError,
    StorageError,
)
from adaprompt.experiments.report import Report, ReportRow
from adaprompt.experiments.synthetic import (
    SyntheticSpec,
    default_benchmark,
    filter_domains,
    gen_synthetic_corpus,
)
from adaprompt.mlm.model import MlmConfig, MlmModel, init_model
from adaprompt.mlm.pretrain import DEFAULT_MASK_PROB, pretrain_mlm
from adaprompt.promptgen.layer import PromptGenConfig, init_prompt_layer
from adaprompt.template.classifier import PromptClassifier
from adaprompt.template.prompt import parse_prompt_spec
from adaprompt.template.verbalizer import DEFAULT_VERBALIZER, Verbalizer
from adaprompt.textcore.dataset import LabeledExample, load_dataset
from adaprompt.textcore.sampling import DatasetSplit, audit_disjoint, sample_few_shot
from adaprompt.textcore.vocab import DEFAULT_MAX_LEN, MASK, Vocab, build_vocab, encode_text
from adaprompt.training.loop import TrainHistory, train
from adaprompt.training.regime import MIGRATION_LR, PRE_AP_LR, Regime, TuningMode
from adaprompt.utils.config import env_n_jobs

logger = logging.getLogger(__name__)

HELDOUT = "heldout"
PRE_AP = "pre_ap"


class Protocol(str, Enum):
    COMPARE_PROMPTS = "compare_prompts"
    FIXED_LM_SCALE = "fixed_lm_scale"
    MIGRATION = "migration"
    PRE_AP = "pre_ap"


def _default_regime(protocol: Protocol) -> Regime:
    if protocol is Protocol.FIXED_LM_SCALE:
        return Regime(TuningMode.AP_FIXED_LM)
    if protocol is Protocol.MIGRATION:
        return Regime(TuningMode.AP_FULL, MIGRATION_LR)
    if protocol is Protocol.PRE_AP:
        return Regime(TuningMode.AP_FULL, PRE_AP_LR)
    return Regime(TuningMode.AP_FULL)


@dataclass
class PretrainSettings:
    epochs: int = 1
    batch_size: int = 16
    learning_rate: float = 1e-3
    mask_prob: float = DEFAULT_MASK_PROB
    seed: int = 0


@dataclass
class ExperimentSpec:
    """Everything one protocol run needs.

    The protocol decides which tuning modes run; ``regime`` only supplies the
    schedule (learning rate, batch size, epochs) they share.

    Attributes:
        model: MlmConfig fields; ``vocab_size`` comes from the corpus.
        prompt_layer: PromptGenConfig fields; ``d_model`` comes from the model.
        source_regime: Schedule for source-domain prompt pre-training (PRE_AP).
        synthetic: Corpus spec; the default benchmark when neither this nor
            ``dataset_path`` is given.
        large_k_train: Training size of the large-data arm of FIXED_LM_SCALE.
        large_epochs: Epoch budget of that arm.
        source_k_train: Pooled source-domain training size (MIGRATION, PRE_AP).
    """

    protocol: Protocol
    model: dict = field(default_factory=dict)
    prompt_layer: dict = field(default_factory=dict)
    regime: Regime | None = None
    source_regime: Regime | None = None
    patterns: list[str] = field(default_factory=lambda: [f"it is {MASK}"])
    verbalizer: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_VERBALIZER))
    synthetic: SyntheticSpec | None = None
    dataset_path: str | None = None
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    k_train: int = 32
    n_test: int = 600
    large_k_train: int = 10000
    large_epochs: int = 3
    source_k_train: int = 1000
    train_domains: list[str] = field(default_factory=list)
    heldout_domain: str | None = None
    target_domain: str | None = None
    max_len: int = DEFAULT_MAX_LEN
    min_count: int = 1
    pretrain: PretrainSettings = field(default_factory=PretrainSettings)

    def __post_init__(self):
        self.protocol = Protocol(self.protocol)
        if self.regime is None:
            self.regime = _default_regime(self.protocol)
        if self.source_regime is None:
            self.source_regime = Regime(TuningMode.AP_FULL, PRE_AP_LR, epochs=3)

    def validate(self) -> None:
        if not self.patterns:
            raise SpecError("at least one prompt pattern is required")
        for pattern in self.patterns:
            if pattern.count(MASK) != 1:
                raise SpecError(f"pattern {pattern!r} must contain exactly one {MASK}")
        if not self.seeds:
            raise SpecError("at least one seed is required")
        if self.synthetic is not None and self.dataset_path is not None:
            raise SpecError("give either a synthetic corpus or a dataset path, not both")
        if self.k_train < 2 or self.n_test < 1:
            raise SpecError(f"k_train must be >= 2 and n_test >= 1 ({self.k_train}, {self.n_test})")
        if len(self.verbalizer) < 2:
            raise SpecError("the verbalizer needs at least two labels")
        self.regime.validate()
        self.source_regime.validate()

        if self.protocol is Protocol.FIXED_LM_SCALE and self.large_k_train <= self.k_train:
            raise SpecError("large_k_train must exceed k_train")
        if self.protocol is Protocol.MIGRATION:
            if len(self.train_domains) < 2:
                raise SpecError("migration needs at least two training domains")
            if not self.heldout_domain or self.heldout_domain in self.train_domains:
                raise SpecError("migration needs a held-out domain absent from training")
        if self.protocol is Protocol.PRE_AP:
            if not self.train_domains:
                raise SpecError("pre_ap needs at least one source domain")
            if not self.target_domain or self.target_domain in self.train_domains:
                raise SpecError("pre_ap needs a target domain disjoint from the source domains")

        try:
            MlmConfig.from_dict({**self.model, "vocab_size": 5}).validate()
            PromptGenConfig.from_dict({**self.prompt_layer, "d_model": 1}).validate()
        except ConfigError as e:
            raise SpecError(str(e)) from e

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise SpecError(f"Unknown experiment spec fields: {sorted(unknown)}")
        if "protocol" not in data:
            raise SpecError("experiment spec needs a protocol")
        try:
            protocol = Protocol(data["protocol"])
        except ValueError:
            raise SpecError(
                f"Unknown protocol {data['protocol']!r}; use one of {[p.value for p in Protocol]}"
            ) from None

        data = {**data, "protocol": protocol}
        for key, default in (
            ("regime", _default_regime(protocol)),
            ("source_regime", Regime(TuningMode.AP_FULL, PRE_AP_LR, epochs=3)),
        ):
            if key in data:
                try:
                    base = default.to_dict()
                    if "mode" in data[key] and "learning_rate" not in data[key]:
                        del base["learning_rate"]
                    data[key] = Regime.from_dict({**base, **data[key]})
                except ConfigError as e:
                    raise SpecError(f"{key}: {e}") from e
        if data.get("synthetic") is not None:
            data["synthetic"] = SyntheticSpec.from_dict(data["synthetic"])
        if "pretrain" in data:
            try:
                data["pretrain"] = PretrainSettings(**data["pretrain"])
            except TypeError as e:
                raise SpecError(f"pretrain: {e}") from None
        spec = cls(**data)
        spec.validate()
        return spec


def load_experiment_spec(path: str | Path) -> ExperimentSpec:
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        logger.error(f"Error reading experiment spec {path}: {e}")
        raise StorageError(f"cannot read experiment spec {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise SpecError(f"experiment spec {path} is not valid JSON: {e}") from e
    return ExperimentSpec.from_dict(data)


# Backbone


@dataclass
class Backbone:
    examples: list[LabeledExample]
    vocab: Vocab
    model: MlmModel
    pretrain_losses: list[float] = field(default_factory=list)


def load_corpus(spec: ExperimentSpec) -> list[LabeledExample]:
    if spec.dataset_path is not None:
        examples = load_dataset(spec.dataset_path)
    else:
        examples = gen_synthetic_corpus(spec.synthetic or default_benchmark())
    domains = {e.domain for e in examples}
    wanted = [*spec.train_domains, spec.heldout_domain, spec.target_domain]
    missing = sorted(d for d in wanted if d is not None and d not in domains)
    if missing:
        raise SpecError(f"domains {missing} do not occur in the corpus")
    return examples


def prepare_backbone(spec: ExperimentSpec) -> Backbone:
    """Build the vocabulary and MLM-pretrain a fresh stand-in model on the whole corpus."""
    examples = load_corpus(spec)
    vocab = build_vocab(examples, spec.min_count)
    config = MlmConfig.from_dict({**spec.model, "vocab_size": len(vocab)})
    model = init_model(config)
    settings = spec.pretrain
    losses = []
    if settings.epochs > 0:
        logger.info("Pretraining the stand-in MLM on %d sentences", len(examples))
        sequences = [encode_text(e.text, vocab, spec.max_len).ids for e in examples]
        losses = pretrain_mlm(
            model,
            sequences,
            epochs=settings.epochs,
            batch_size=settings.batch_size,
            lr=settings.learning_rate,
            mask_prob=settings.mask_prob,
            seed=settings.seed,
        )
    return Backbone(examples, vocab, model, losses)


def build_classifier(
    backbone: Backbone,
    spec: ExperimentSpec,
    pattern: str,
    adaptive: bool,
    seed: int,
    model: MlmModel | None = None,
) -> PromptClassifier:
    """A classifier over ``model``, or over a private copy of the backbone model."""
    if model is None:
        model = backbone.model.copy()
    prompt = parse_prompt_spec(pattern, backbone.vocab)
    verbalizer = Verbalizer.from_mapping(spec.verbalizer, backbone.vocab)
    layer = None
    if adaptive:
        base_seed = spec.prompt_layer.get("seed", 0)
        config = PromptGenConfig.from_dict(
            {**spec.prompt_layer, "d_model": model.config.d_model, "seed": base_seed + seed}
        )
        layer = init_prompt_layer(config)
    longest = prompt.m + 1 + (layer.config.s if layer else 0) + spec.max_len
    if longest > model.config.max_positions:
        raise ConfigError(
            f"templates up to {longest} rows exceed max_positions={model.config.max_positions}"
        )
    return PromptClassifier(model, backbone.vocab, prompt, verbalizer, layer, spec.max_len)


def _target_pool(backbone: Backbone, spec: ExperimentSpec) -> list[LabeledExample]:
    if spec.target_domain is None:
        return backbone.examples
    return filter_domains(backbone.examples, [spec.target_domain])


def _final_row(
    pattern: str, history: TrainHistory, seed: int, setting: str = "", regime: str | None = None
) -> ReportRow:
    return ReportRow.from_counts(
        pattern,
        regime or history.mode.value,
        history.final_correct,
        history.final_total,
        seed,
        setting,
    )


# Per-seed workers


def _compare_prompts_seed(backbone: Backbone, spec: ExperimentSpec, seed: int) -> list[ReportRow]:
    split = sample_few_shot(_target_pool(backbone, spec), spec.k_train, spec.n_test, seed)
    rows = []
    for pattern in spec.patterns:
        for mode in (TuningMode.ZERO_SHOT, TuningMode.HPL, TuningMode.AP_FULL):
            classifier = build_classifier(backbone, spec, pattern, mode.uses_prompt_layer, seed)
            history = train(classifier, split, spec.regime.with_mode(mode), seed)
            rows.append(_final_row(pattern, history, seed))
    return rows


def _fixed_lm_scale_seed(backbone: Backbone, spec: ExperimentSpec, seed: int) -> list[ReportRow]:
    pattern = spec.patterns[0]
    large = sample_few_shot(_target_pool(backbone, spec), spec.large_k_train, spec.n_test, seed)
    small_train = sample_few_shot(large.train, spec.k_train, 0, seed).train
    small = DatasetSplit(small_train, large.test, seed)

    regime = spec.regime.with_mode(TuningMode.AP_FIXED_LM)
    frozen = backbone.model.copy()
    digest = frozen.parameter_digest()
    rows = []
    for setting, split, epochs in (
        ("large", large, spec.large_epochs),
        ("small", small, regime.epochs),
    ):
        classifier = build_classifier(backbone, spec, pattern, True, seed, model=frozen)
        history = train(classifier, split, replace(regime, epochs=epochs), seed)
        rows.append(_final_row(pattern, history, seed, setting))
    if frozen.parameter_digest() != digest:
        raise FreezeViolationError("the frozen LM changed during fixed-LM prompt tuning")
    return rows


def _audit_heldout(
    train_examples: list[LabeledExample], heldout_domain: str, heldout_test: list[LabeledExample]
) -> None:
    leaked = [e for e in train_examples if e.domain == heldout_domain]
    if leaked:
        raise SplitLeakError(f"{len(leaked)} training examples come from {heldout_domain!r}")
    audit_disjoint(train_examples, heldout_test)


def _migration_seed(backbone: Backbone, spec: ExperimentSpec, seed: int) -> list[ReportRow]:
    pattern = spec.patterns[0]
    source = filter_domains(backbone.examples, spec.train_domains)
    heldout = filter_domains(backbone.examples, [spec.heldout_domain])
    split = sample_few_shot(
        source, spec.source_k_train, spec.n_test * len(spec.train_domains), seed
    )
    heldout_test = list(sample_few_shot(heldout, 0, spec.n_test, seed).test)
    _audit_heldout(list(split.train), spec.heldout_domain, heldout_test)
    monitors = {}
    for domain in spec.train_domains:
        in_domain = [e for e in split.test if e.domain == domain]
        if in_domain:
            monitors[domain] = in_domain

    rows = []
    zero_shot = build_classifier(backbone, spec, pattern, adaptive=False, seed=seed)
    history = train(
        zero_shot,
        DatasetSplit((), tuple(heldout_test), seed),
        spec.regime.with_mode(TuningMode.ZERO_SHOT),
        seed,
    )
    rows.append(_final_row(pattern, history, seed, HELDOUT))

    adaptive = build_classifier(backbone, spec, pattern, adaptive=True, seed=seed)
    regime = spec.regime.with_mode(TuningMode.AP_FULL)
    history = train(
        adaptive, DatasetSplit(split.train, tuple(heldout_test), seed), regime, seed, monitors
    )
    for record in history.records:
        rows.append(
            ReportRow.from_counts(
                pattern,
                regime.mode.value,
                record.test_correct,
                record.test_total,
                seed,
                f"epoch{record.epoch}:{HELDOUT}",
            )
        )
        for name, accuracy in record.monitors.items():
            rows.append(
                ReportRow(
                    pattern,
                    regime.mode.value,
                    accuracy,
                    len(monitors[name]),
                    seed,
                    f"epoch{record.epoch}:{name}",
                )
            )
    rows.append(_final_row(pattern, history, seed, HELDOUT))
    return rows


def _pre_ap_seed(backbone: Backbone, spec: ExperimentSpec, seed: int) -> list[ReportRow]:
    pattern = spec.patterns[0]
    source = filter_domains(backbone.examples, spec.train_domains)
    target = filter_domains(backbone.examples, [spec.target_domain])
    target_split = sample_few_shot(target, spec.k_train, spec.n_test, seed)
    source_train = sample_few_shot(source, spec.source_k_train, 0, seed).train
    audit_disjoint(source_train, target_split.test)
    regime = spec.regime.with_mode(TuningMode.AP_FULL)

    rows = []
    hpl = build_classifier(backbone, spec, pattern, adaptive=False, seed=seed)
    history = train(hpl, target_split, regime.with_mode(TuningMode.HPL), seed)
    rows.append(_final_row(pattern, history, seed))

    scratch = build_classifier(backbone, spec, pattern, adaptive=True, seed=seed)
    history = train(scratch, target_split, regime, seed)
    rows.append(_final_row(pattern, history, seed))

    pre = build_classifier(backbone, spec, pattern, adaptive=True, seed=seed)
    logger.info("seed %d: pre-training the prompt layer on %s", seed, spec.train_domains)
    source_regime = spec.source_regime.with_mode(TuningMode.AP_FULL)
    train(pre, DatasetSplit(source_train, (), seed), source_regime, seed)
    history = train(pre, target_split, regime, seed)
    rows.append(_final_row(pattern, history, seed, regime=PRE_AP))
    return rows


# Drivers

Worker = Callable[[Backbone, ExperimentSpec, int], list[ReportRow]]


def _run_worker(mode: str, worker: Worker, backbone: Backbone, spec: ExperimentSpec, seed: int):
    with precision(mode):
        return worker(backbone, spec, seed)


def _merge(per_seed: list[list[ReportRow]]) -> list[ReportRow]:
    """Group rows by configuration (first-seen order), seeds in run order within a group."""
    order: dict[tuple[str, str, str], int] = {}
    keyed = []
    for seed_index, rows in enumerate(per_seed):
        for row in rows:
            key = (row.prompt, row.regime, row.setting)
            order.setdefault(key, len(order))
            keyed.append(((order[key], seed_index), row))
    return [row for _, row in sorted(keyed, key=lambda item: item[0])]


def _run(protocol: Protocol, worker: Worker, spec: ExperimentSpec, backbone: Backbone | None):
    spec = replace(spec, protocol=protocol)
    spec.validate()
    if backbone is None:
        backbone = prepare_backbone(spec)
    logger.info("Running %s over seeds %s", protocol.value, spec.seeds)
    per_seed = Parallel(n_jobs=env_n_jobs())(
        delayed(_run_worker)(precision_name(), worker, backbone, spec, seed) for seed in spec.seeds
    )
    report = Report(protocol.value, _merge(per_seed))
    logger.info("%s finished: %d rows", protocol.value, len(report))
    return report


def run_compare_prompts(spec: ExperimentSpec, backbone: Backbone | None = None) -> Report:
    """ZERO_SHOT, HPL and AP_FULL rows for every prompt pattern on identical splits."""
    return _run(Protocol.COMPARE_PROMPTS, _compare_prompts_seed, spec, backbone)


def run_fixed_lm_scale(spec: ExperimentSpec, backbone: Backbone | None = None) -> Report:
    """AP_FIXED_LM against one frozen LM with a large and a small training set."""
    return _run(Protocol.FIXED_LM_SCALE, _fixed_lm_scale_seed, spec, backbone)


def run_migration(spec: ExperimentSpec, backbone: Backbone | None = None) -> Report:
    """AP on pooled source domains, evaluated per epoch in-domain and on a held-out domain."""
    return _run(Protocol.MIGRATION, _migration_seed, spec, backbone)


def run_pre_ap(spec: ExperimentSpec, backbone: Backbone | None = None) -> Report:
    """HPL, AP from scratch and source-pretrained AP on one few-shot target split."""
    return _run(Protocol.PRE_AP, _pre_ap_seed, spec, backbone)


RUNNERS = {
    Protocol.COMPARE_PROMPTS: run_compare_prompts,
    Protocol.FIXED_LM_SCALE: run_fixed_lm_scale,
    Protocol.MIGRATION: run_migration,
    Protocol.PRE_AP: run_pre_ap,
}


def run_experiment(spec: ExperimentSpec, backbone: Backbone | None = None) -> Report:
    return RUNNERS[spec.protocol](spec, backbone)


# Ordering margins


def _mean(report: Report, regime: str, setting: str = "", prompt: str | None = None) -> float:
    rows = [r for r in report.select(regime, setting) if prompt is None or r.prompt == prompt]
    if not rows:
        raise EmptyInputError(f"{report.protocol} report has no {regime!r} rows for {setting!r}")
    return float(np.mean([r.accuracy for r in rows]))


def ordering_margins(report: Report) -> dict[str, float]:
    """Seed-averaged accuracy gaps between the configurations a protocol compares.

    A positive gap means the first configuration scored higher. For
    ``fixed_lm_scale`` the large-data accuracy itself is included too.
    """
    try:
        protocol = Protocol(report.protocol)
    except ValueError:
        raise SpecError(f"no ordering defined for protocol {report.protocol!r}") from None
    ap_full, hpl = TuningMode.AP_FULL.value, TuningMode.HPL.value
    zero_shot = TuningMode.ZERO_SHOT.value

    if protocol is Protocol.COMPARE_PROMPTS:
        patterns = sorted({r.prompt for r in report.select(hpl)})
        worst = min(patterns, key=lambda p: _mean(report, hpl, prompt=p))
        return {
            "ap_full - zero_shot": _mean(report, ap_full) - _mean(report, zero_shot),
            "ap_full - hpl (worst hpl prompt)": _mean(report, ap_full, prompt=worst)
            - _mean(report, hpl, prompt=worst),
        }
    if protocol is Protocol.FIXED_LM_SCALE:
        fixed = TuningMode.AP_FIXED_LM.value
        large = _mean(report, fixed, "large")
        return {
            "ap_fixed_lm large": large,
            "ap_fixed_lm large - small": large - _mean(report, fixed, "small"),
        }
    if protocol is Protocol.MIGRATION:
        gap = _mean(report, ap_full, HELDOUT) - _mean(report, zero_shot, HELDOUT)
        return {"ap_full - zero_shot (heldout)": gap}
    return {
        "pre_ap - ap_full": _mean(report, PRE_AP) - _mean(report, ap_full),
        "pre_ap - hpl": _mean(report, PRE_AP) - _mean(report, hpl),
    }
