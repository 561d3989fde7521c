"""Command-line entry point: ``adaprompt <command> [options]``."""

import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import click

from adaprompt.cli.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from adaprompt.cli.config import PRECISIONS, RunConfig, load_run_config
from adaprompt.diffcore.tensor import set_precision
from adaprompt.errors import AdaPromptError, ConfigError, StorageError
from adaprompt.experiments.evaluation import evaluate_counts
from adaprompt.experiments.protocols import (
    load_experiment_spec,
    ordering_margins,
    run_experiment,
)
from adaprompt.experiments.report import (
    JSONL_STYLE,
    TABLE_STYLE,
    format_margins,
    format_report,
    format_summary,
    round_half_up,
    summarize,
)
from adaprompt.experiments.synthetic import SyntheticSpec, gen_synthetic_corpus
from adaprompt.mlm.model import MlmConfig, init_model
from adaprompt.mlm.pretrain import DEFAULT_MASK_PROB, pretrain_mlm
from adaprompt.promptgen.layer import PromptGenLayer, init_prompt_layer
from adaprompt.template.classifier import PromptClassifier
from adaprompt.template.prompt import parse_prompt_spec
from adaprompt.template.verbalizer import DEFAULT_VERBALIZER, Verbalizer, predict_label
from adaprompt.textcore.dataset import load_dataset, save_dataset
from adaprompt.textcore.sampling import DatasetSplit, sample_few_shot
from adaprompt.textcore.vocab import DEFAULT_MAX_LEN, MASK, build_vocab, encode_text
from adaprompt.training.loop import train
from adaprompt.utils.config import configure_logging

logger = logging.getLogger(__name__)

DEFAULT_PATTERN = f"it is {MASK}"


def _read_json(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        logger.error(f"Error reading {path}: {e}")
        raise StorageError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from e


def _write_text(path: str, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as e:
        logger.error(f"Error writing {path}: {e}")
        raise StorageError(f"cannot write {path}: {e}") from e


def _classifier_from(checkpoint: Checkpoint, pattern: str | None) -> PromptClassifier:
    """Rebuild the classifier a checkpoint was trained as; flags override its task section."""
    task = checkpoint.task or {}
    vocab = checkpoint.vocab
    return PromptClassifier(
        checkpoint.model,
        vocab,
        parse_prompt_spec(pattern or task.get("pattern", DEFAULT_PATTERN), vocab),
        Verbalizer.from_mapping(task.get("verbalizer", DEFAULT_VERBALIZER), vocab),
        checkpoint.prompt_layer,
        task.get("max_len", DEFAULT_MAX_LEN),
    )


def _prompt_layer_for(backbone: Checkpoint, config: RunConfig, seed: int) -> PromptGenLayer | None:
    """The checkpoint's prompt layer when the run's shape matches it, else a fresh one."""
    if not config.regime.mode.uses_prompt_layer:
        if backbone.prompt_layer is not None:
            logger.info(
                "%s uses the hand-crafted template; dropping the checkpoint's prompt layer",
                config.regime.mode.value,
            )
        return None
    wanted = config.prompt_config(backbone.model.config.d_model)
    existing = backbone.prompt_layer
    if existing is None:
        if "seed" not in config.prompt_layer:
            wanted.seed = seed
        return init_prompt_layer(wanted)
    mismatched = [
        name
        for name in ("s", "d_hidden")
        if name in config.prompt_layer and getattr(wanted, name) != getattr(existing.config, name)
    ]
    if mismatched:
        raise ConfigError(
            f"prompt_layer {mismatched} differ from the checkpoint's prompt layer "
            f"(s={existing.config.s}, d_hidden={existing.config.d_hidden})"
        )
    logger.info("Continuing from the checkpoint's prompt layer (s=%d)", existing.config.s)
    return existing


@click.group()
@click.option("--seed", type=int, default=None, help="Seed for every random choice (default 0).")
@click.option(
    "--precision",
    type=click.Choice(PRECISIONS),
    default=None,
    help="Floating point width; overrides ADAPROMPT_PRECISION.",
)
@click.pass_context
def cli(ctx: click.Context, seed: int | None, precision: str | None):
    """Adaptive-prompt few-shot sentiment classification."""
    configure_logging()
    if precision is not None:
        set_precision(precision)
    ctx.obj = {"seed": seed, "precision": precision}


@cli.command("synth-data")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Output JSONL file.")
@click.option(
    "--spec",
    "spec_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="Synthetic corpus spec (JSON); the five-domain benchmark when omitted.",
)
@click.option("--n-per-domain", type=int, default=None, help="Sentences per domain.")
@click.pass_obj
def synth_data(obj: dict, out: str, spec_path: str | None, n_per_domain: int | None):
    """Write a synthetic multi-domain corpus."""
    spec = SyntheticSpec.from_dict(_read_json(spec_path))
    if obj["seed"] is not None:
        spec = replace(spec, seed=obj["seed"])
    if n_per_domain is not None:
        spec = replace(spec, n_per_domain=n_per_domain)
    count = save_dataset(gen_synthetic_corpus(spec), out)
    click.echo(f"wrote {count} examples to {out}")


@cli.command("pretrain-mlm")
@click.option("--data", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Checkpoint path.")
@click.option("--model-config", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--epochs", type=int, default=1, show_default=True)
@click.option("--batch-size", type=int, default=16, show_default=True)
@click.option("--lr", type=float, default=1e-3, show_default=True)
@click.option("--mask-prob", type=float, default=DEFAULT_MASK_PROB, show_default=True)
@click.option("--max-len", type=int, default=DEFAULT_MAX_LEN, show_default=True)
@click.option("--min-count", type=int, default=1, show_default=True)
@click.pass_obj
def pretrain_command(
    obj: dict,
    data: str,
    out: str,
    model_config: str | None,
    epochs: int,
    batch_size: int,
    lr: float,
    mask_prob: float,
    max_len: int,
    min_count: int,
):
    """MLM-pretrain a fresh stand-in model on a dataset's text."""
    seed = obj["seed"] or 0
    examples = load_dataset(data)
    vocab = build_vocab(examples, min_count)
    overrides = _read_json(model_config)
    config = MlmConfig.from_dict({**overrides, "vocab_size": len(vocab), "seed": seed})
    model = init_model(config)
    sequences = [encode_text(e.text, vocab, max_len).ids for e in examples]
    losses = pretrain_mlm(model, sequences, epochs, batch_size, lr, mask_prob, seed)
    digest = save_checkpoint(model, None, vocab, out)
    click.echo(f"final loss {losses[-1]:.4f}" if losses else "no pretraining epochs run")
    click.echo(f"checkpoint {out} digest {digest}")


@cli.command("train")
@click.option(
    "--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True
)
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Trained checkpoint.")
@click.option("--history", type=click.Path(dir_okay=False), default=None, help="Per-epoch JSONL.")
@click.pass_obj
def train_command(obj: dict, config_path: str, checkpoint: str, out: str, history: str | None):
    """Run one regime on a few-shot split drawn from the configured dataset."""
    config = load_run_config(config_path)
    config.validate()
    seed = config.seed if obj["seed"] is None else obj["seed"]
    if obj["precision"] is None:
        set_precision(config.precision)
    backbone = load_checkpoint(checkpoint)
    model, vocab = backbone.model, backbone.vocab
    config.validate(model.config.d_model)

    examples = load_dataset(config.train_path)
    if config.test_path is not None:
        train_examples = sample_few_shot(examples, config.k_train, 0, seed).train
        split = DatasetSplit(train_examples, tuple(load_dataset(config.test_path)), seed)
    else:
        split = sample_few_shot(examples, config.k_train, config.n_test, seed)

    layer = _prompt_layer_for(backbone, config, seed)
    classifier = PromptClassifier(
        model,
        vocab,
        parse_prompt_spec(config.pattern, vocab),
        Verbalizer.from_mapping(config.verbalizer, vocab),
        layer,
        config.max_len,
    )
    result = train(classifier, split, config.regime, seed)
    digest = save_checkpoint(model, layer, vocab, out, task=config.task())

    if history is not None:
        lines = [json.dumps(record.to_dict()) for record in result.records]
        _write_text(history, "".join(line + "\n" for line in lines))
    if result.final_accuracy is not None:
        click.echo(
            f"{config.regime.mode.value} test accuracy {round_half_up(result.final_accuracy)} "
            f"({result.final_correct}/{result.final_total})"
        )
    click.echo(f"checkpoint {out} digest {digest}")


@cli.command("eval")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--data", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--pattern", default=None, help="Prompt pattern; defaults to the checkpoint's.")
@click.pass_obj
def eval_command(obj: dict, checkpoint: str, data: str, pattern: str | None):
    """Accuracy of a checkpoint on a dataset."""
    classifier = _classifier_from(load_checkpoint(checkpoint), pattern)
    correct, total = evaluate_counts(classifier, load_dataset(data))
    click.echo(f"accuracy {round_half_up(correct / total)} ({correct}/{total})")


@cli.command("predict")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--text", required=True)
@click.option("--pattern", default=None, help="Prompt pattern; defaults to the checkpoint's.")
@click.pass_obj
def predict_command(obj: dict, checkpoint: str, text: str, pattern: str | None):
    """Label one text and print the per-label posterior."""
    classifier = _classifier_from(load_checkpoint(checkpoint), pattern)
    posterior = classifier.posterior(text)
    click.echo(predict_label(posterior))
    for label, probability in posterior.as_dict().items():
        click.echo(f"{label}\t{probability:.6f}")


@cli.command("experiment")
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option(
    "--format", "style", type=click.Choice([TABLE_STYLE, JSONL_STYLE]), default=TABLE_STYLE
)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write the report here.")
@click.option(
    "--summary/--no-summary",
    default=True,
    help="Append mean +/- std per configuration and the ordering margins.",
)
@click.pass_obj
def experiment_command(obj: dict, spec_path: str, style: str, out: str | None, summary: bool):
    """Run an experiment spec and emit its report."""
    spec = load_experiment_spec(spec_path)
    if obj["seed"] is not None:
        spec = replace(
            spec,
            seeds=[obj["seed"] + s for s in spec.seeds],
            pretrain=replace(spec.pretrain, seed=obj["seed"]),
        )
    report = run_experiment(spec)
    margins = ordering_margins(report)
    for name, value in margins.items():
        logger.info("%s margin %s: %s", report.protocol, name, round_half_up(value))
    text = format_report(report, style)
    if summary and style == TABLE_STYLE:
        text += "\n\n" + format_summary(summarize(report))
        text += "\n\n" + format_margins(margins)
    if out is None:
        click.echo(text)
    else:
        _write_text(out, text + "\n")
        click.echo(f"wrote {len(report)} rows to {out}")


def main(argv: Sequence[str] | None = None) -> int:
    """Run the CLI and return its exit code instead of exiting.

    Usage errors exit with 2, adaprompt errors with 1.
    """
    try:
        result = cli.main(
            args=list(argv) if argv is not None else None,
            prog_name="adaprompt",
            standalone_mode=False,
        )
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        return 1
    except AdaPromptError as e:
        logger.error(f"{type(e).__name__}: {e}")
        click.echo(f"error: {e}", err=True)
        return 1
    return result if isinstance(result, int) else 0


def run() -> None:
    sys.exit(main())
