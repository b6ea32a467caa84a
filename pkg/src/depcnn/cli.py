"""Command-line surface: encode, train, cv, cross, ablate, predict, gradcheck.

Settings resolve in three layers: built-in defaults, then an INI config
file (``--config``), then explicit flags.  Every run writes the fully
resolved configuration to ``config.echo.ini`` in the output directory (and
a verbatim copy of the input config, when one was given), so any run can be
reproduced from its own echo.

Exit statuses: 0 success, 2 usage/input error, 3 consistency error
(schema-hash mismatch), 4 numeric failure.
"""

from __future__ import annotations

import configparser
import functools
import shutil
import sys
from pathlib import Path

import click

from . import corpus as corpus_mod
from .checkpoint import (
    ContainerFormatError,
    SchemaMismatchError,
    load_checkpoint,
    load_dataset,
    save_checkpoint,
    save_dataset,
    write_manifest,
)
from .corpus import ConfigError, CorpusError, load_corpus, load_instances, split_folds
from .features import (
    EmbeddingFormatError,
    EmbeddingTable,
    FeatureSchema,
    encode_dataset,
    read_schema,
    write_schema,
)
from .harness import (
    TrainConfig,
    metrics_from_rows,
    predict_all,
    read_fold_plan,
    render_report,
    run_ablation,
    run_cross_corpus,
    run_cv,
    run_difficult_subset,
    train,
    write_fold_plan,
    write_predictions,
)
from .layers import NumericError
from .network import ModelConfig, reference_gradient_check

GRADCHECK_TOLERANCE = 1e-4

_SECTION_ORDER = ("paths", "model", "train", "cv", "run")


class Settings:
    """Layered option resolution with an auditable echo of every value."""

    def __init__(self, config_path: str | None):
        self.config_path = config_path
        self._file = configparser.ConfigParser()
        if config_path:
            read = self._file.read(config_path)
            if not read:
                raise ConfigError(f"cannot read config file {config_path}")
        self.resolved: dict[tuple[str, str], str] = {}

    def get(self, section: str, key: str, override, default, cast=str):
        if override is not None:
            value = override
        elif self._file.has_option(section, key):
            value = self._file.get(section, key)
        else:
            value = default
        if value is None:
            self.resolved[(section, key)] = ""
            return None
        self.resolved[(section, key)] = str(value)
        return cast(value)

    def echo_text(self) -> str:
        sections = sorted(
            {sec for sec, _ in self.resolved},
            key=lambda s: (_SECTION_ORDER.index(s) if s in _SECTION_ORDER else 99, s),
        )
        lines = []
        for section in sections:
            lines.append(f"[{section}]")
            for (sec, key), value in sorted(self.resolved.items()):
                if sec == section:
                    lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


def _as_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"cannot interpret {value!r} as a boolean")


def _as_windows(value) -> tuple[int, ...]:
    if isinstance(value, tuple):
        return value
    try:
        return tuple(int(part) for part in str(value).split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"cannot parse window sizes from {value!r}") from None


def _prepare_out(out_dir: str, settings: Settings) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.echo.ini").write_text(settings.echo_text(), encoding="utf-8")
    if settings.config_path:
        shutil.copyfile(settings.config_path, out / "config.input.ini")
    return out


def guarded(fn):
    """Translate library exceptions into the documented exit statuses."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except SchemaMismatchError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(3)
        except NumericError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(4)
        except (
            CorpusError,
            ConfigError,
            EmbeddingFormatError,
            ContainerFormatError,
            OSError,
            ValueError,
        ) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)

    return wrapper


def common_options(fn):
    fn = click.option("--precision", type=click.Choice(["f32", "f64"]), default=None,
                      help="Numeric precision (default f64).")(fn)
    fn = click.option("--out", "out_dir", required=True,
                      type=click.Path(file_okay=False),
                      help="Output directory for reports and artifacts.")(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="Master seed; unset seeds derive from it.")(fn)
    fn = click.option("--config", "config_path",
                      type=click.Path(exists=True, dir_okay=False), default=None,
                      help="INI config file; flags override its values.")(fn)
    return fn


def model_options(fn):
    fn = click.option("--train-embeddings/--no-train-embeddings", default=None,
                      help="Fine-tune the word-embedding table.")(fn)
    fn = click.option("--channels", type=click.IntRange(1, 2), default=None)(fn)
    fn = click.option("--keep-prob", type=float, default=None)(fn)
    fn = click.option("--filters", type=int, default=None,
                      help="Filters per window size.")(fn)
    fn = click.option("--windows", default=None,
                      help="Comma-separated window sizes, e.g. 3,5,7.")(fn)
    return fn


def train_options(fn):
    fn = click.option("--dropout-seed", type=int, default=None)(fn)
    fn = click.option("--shuffle-seed", type=int, default=None)(fn)
    fn = click.option("--learning-rate", "--lr", "learning_rate", type=float,
                      default=None)(fn)
    fn = click.option("--batch-size", type=int, default=None)(fn)
    fn = click.option("--epochs", type=int, default=None)(fn)
    return fn


def _resolve_run(settings: Settings, seed, precision):
    seed = settings.get("run", "seed", seed, 0, int)
    precision = settings.get("run", "precision", precision, "f64")
    return seed, precision


def _resolve_model(settings: Settings, opts, d, emb_dim, max_len, seed, precision):
    return ModelConfig(
        windows=settings.get("model", "windows", opts["windows"], "3", _as_windows),
        filters_per_window=settings.get("model", "filters", opts["filters"], 400, int),
        max_len=max_len,
        keep_prob=settings.get("model", "keep_prob", opts["keep_prob"], 0.5, float),
        channels=settings.get("model", "channels", opts["channels"], 2, int),
        d=d,
        emb_dim=emb_dim,
        train_embeddings=settings.get(
            "model", "train_embeddings", opts["train_embeddings"], False, _as_bool
        ),
        seed=seed,
        precision=precision,
    )


def _resolve_train(settings: Settings, opts, seed):
    return TrainConfig(
        epochs=settings.get("train", "epochs", opts["epochs"], 250, int),
        batch_size=settings.get("train", "batch_size", opts["batch_size"], 128, int),
        learning_rate=settings.get(
            "train", "learning_rate", opts["learning_rate"], 0.0007, float
        ),
        shuffle_seed=settings.get(
            "train", "shuffle_seed", opts["shuffle_seed"], seed + 101, int
        ),
        dropout_seed=settings.get(
            "train", "dropout_seed", opts["dropout_seed"], seed + 202, int
        ),
    )


def _seed_echo(seed, train_config=None, fold_seed=None):
    seeds = {"seed": seed}
    if train_config is not None:
        seeds["shuffle_seed"] = train_config.shuffle_seed
        seeds["dropout_seed"] = train_config.dropout_seed
    if fold_seed is not None:
        seeds["fold_seed"] = fold_seed
    return seeds


def _config_echo(settings: Settings, skip_keys=(("run", "out"),)):
    return {
        f"{sec}.{key}": value
        for (sec, key), value in settings.resolved.items()
        if (sec, key) not in skip_keys
    }


def _resolve_plan(settings, dataset, k, fold_seed, fold_plan, seed):
    plan_path = settings.get("cv", "fold_plan", fold_plan, None)
    k = settings.get("cv", "k", k, 10, int)
    fold_seed = settings.get("cv", "fold_seed", fold_seed, seed + 7, int)
    if plan_path:
        plan = read_fold_plan(plan_path)
        plan.validate_partition({inst.doc_id for inst in dataset.instances})
        return plan, fold_seed
    return split_folds(dataset.instances, k, fold_seed), fold_seed


@click.group()
@click.version_option(package_name="depcnn")
def main():
    """Two-channel dependency-aware CNN for protein-pair relation extraction."""


@main.command()
@common_options
@click.option("--corpus", "corpus_path", default=None,
              help="Token-per-line TSV corpus.")
@click.option("--instances", "instances_path", default=None,
              help="Candidate-pair file; omitted -> generate all mention pairs.")
@click.option("--embeddings", "embeddings_path", default=None,
              help="word2vec text file; omitted -> deterministic random vectors.")
@click.option("--schema", "schema_path", default=None,
              help="Feature schema file; omitted -> derive from the corpus.")
@click.option("--emb-dim", type=int, default=None)
@click.option("--max-len", type=int, default=None)
@guarded
def encode(config_path, seed, out_dir, precision, corpus_path, instances_path,
           embeddings_path, schema_path, emb_dim, max_len):
    """Encode a corpus into a two-channel dataset file."""
    settings = Settings(config_path)
    seed, precision = _resolve_run(settings, seed, precision)
    corpus_path = settings.get("paths", "corpus", corpus_path, None)
    if not corpus_path:
        raise click.UsageError("encode needs --corpus (or paths.corpus in the config)")
    instances_path = settings.get("paths", "instances", instances_path, None)
    embeddings_path = settings.get("paths", "embeddings", embeddings_path, None)
    schema_path = settings.get("paths", "schema", schema_path, None)
    emb_dim = settings.get("model", "emb_dim", emb_dim, 200, int)
    max_len = settings.get("model", "max_len", max_len, 160, int)

    sentences = load_corpus(corpus_path)
    if instances_path:
        instances = load_instances(instances_path, sentences)
    else:
        instances = corpus_mod.make_instances(sentences)
    schema = read_schema(schema_path) if schema_path else FeatureSchema.from_sentences(sentences)
    if embeddings_path:
        table = EmbeddingTable.load(embeddings_path, dim=emb_dim, seed=seed)
    else:
        table = EmbeddingTable.random(emb_dim, seed=seed)
    dataset = encode_dataset(
        instances, table, schema, max_len=max_len, dtype=precision, with_ids=True
    )
    out = _prepare_out(out_dir, settings)
    save_dataset(out / "dataset.bin", dataset)
    write_schema(schema, out / "schema.txt")
    click.echo(
        f"encoded {len(dataset)} instances "
        f"(d={dataset.d}, max_len={dataset.max_len}, schema {dataset.schema_hash[:12]})"
    )


@main.command(name="train")
@common_options
@model_options
@train_options
@click.option("--data", "data_path", default=None, help="Encoded dataset file.")
@guarded
def train_cmd(config_path, seed, out_dir, precision, data_path, **opts):
    """Train a model on an encoded dataset and write a checkpoint."""
    settings = Settings(config_path)
    seed, precision = _resolve_run(settings, seed, precision)
    data_path = settings.get("paths", "data", data_path, None)
    if not data_path:
        raise click.UsageError("train needs --data (or paths.data in the config)")
    dataset = load_dataset(data_path)
    model_config = _resolve_model(
        settings, opts, dataset.d, dataset.emb_dim, dataset.max_len, seed, precision
    )
    train_config = _resolve_train(settings, opts, seed)
    result = train(
        dataset.instances, model_config, train_config,
        embedding=dataset.embedding_matrix,
    )
    out = _prepare_out(out_dir, settings)
    seeds = _seed_echo(seed, train_config)
    save_checkpoint(
        out / "checkpoint.bin", result.params, model_config, result.adam,
        dataset.schema_hash, seeds,
    )
    write_manifest(out / "checkpoint.manifest.txt", model_config,
                   dataset.schema_hash, seeds)
    with open(out / "losses.tsv", "w", encoding="utf-8") as fh:
        for epoch, loss in enumerate(result.losses):
            fh.write(f"{epoch}\t{loss:.6f}\n")
    rows = predict_all(dataset.instances, result.params, model_config)
    report = render_report(
        "training report",
        report=metrics_from_rows(rows),
        extra_sections=(
            (
                "training",
                [
                    f"instances = {len(dataset)}",
                    f"epochs = {len(result.losses)}",
                    f"final_loss = {result.losses[-1]:.6f}" if result.losses else "final_loss = n/a",
                ],
            ),
        ),
        config_echo=_config_echo(settings),
        seeds=seeds,
    )
    (out / "report.txt").write_text(report, encoding="utf-8")
    click.echo(f"trained {len(result.losses)} epochs on {len(dataset)} instances")


@main.command()
@common_options
@model_options
@train_options
@click.option("--data", "data_path", default=None, help="Encoded dataset file.")
@click.option("--k", type=int, default=None, help="Fold count (default 10).")
@click.option("--fold-seed", type=int, default=None)
@click.option("--fold-plan", default=None,
              help="Externally supplied fold plan file (overrides --k).")
@click.option("--difficult-subset", is_flag=True, default=False,
              help="Also report metrics restricted to difficult-flagged instances.")
@guarded
def cv(config_path, seed, out_dir, precision, data_path, k, fold_seed, fold_plan,
       difficult_subset, **opts):
    """Document-level k-fold cross-validation."""
    settings = Settings(config_path)
    seed, precision = _resolve_run(settings, seed, precision)
    data_path = settings.get("paths", "data", data_path, None)
    if not data_path:
        raise click.UsageError("cv needs --data (or paths.data in the config)")
    dataset = load_dataset(data_path)
    plan, fold_seed = _resolve_plan(settings, dataset, k, fold_seed, fold_plan, seed)
    model_config = _resolve_model(
        settings, opts, dataset.d, dataset.emb_dim, dataset.max_len, seed, precision
    )
    train_config = _resolve_train(settings, opts, seed)
    result = run_cv(dataset, plan, model_config, train_config)
    out = _prepare_out(out_dir, settings)
    seeds = _seed_echo(seed, train_config, fold_seed)
    write_fold_plan(plan, out / "fold_plan.tsv")
    write_predictions(result.rows, out / "predictions.tsv")
    report = render_report(
        "cross-validation report",
        report=result.pooled,
        fold_reports=result.fold_reports,
        macro=result.macro,
        config_echo=_config_echo(settings),
        seeds=seeds,
    )
    (out / "report.txt").write_text(report, encoding="utf-8")
    if difficult_subset:
        difficult_report, difficult_rows, _ = run_difficult_subset(
            dataset, plan, model_config, train_config
        )
        (out / "report.difficult.txt").write_text(
            render_report(
                "difficult-subset report",
                report=difficult_report,
                extra_sections=(
                    ("subset", [f"instances = {len(difficult_rows)}"]),
                ),
                config_echo=_config_echo(settings),
                seeds=seeds,
            ),
            encoding="utf-8",
        )
    click.echo(
        f"cv over {len(plan)} folds: P={result.pooled.precision:.3f} "
        f"R={result.pooled.recall:.3f} F={result.pooled.f1:.3f}"
    )


@main.command()
@common_options
@model_options
@train_options
@click.option("--train-data", "train_data_path", default=None)
@click.option("--test-data", "test_data_path", default=None)
@guarded
def cross(config_path, seed, out_dir, precision, train_data_path, test_data_path,
          **opts):
    """Train on one encoded corpus, evaluate on another."""
    settings = Settings(config_path)
    seed, precision = _resolve_run(settings, seed, precision)
    train_data_path = settings.get("paths", "train_data", train_data_path, None)
    test_data_path = settings.get("paths", "test_data", test_data_path, None)
    if not train_data_path or not test_data_path:
        raise click.UsageError("cross needs --train-data and --test-data")
    train_dataset = load_dataset(train_data_path)
    test_dataset = load_dataset(test_data_path)
    model_config = _resolve_model(
        settings, opts, train_dataset.d, train_dataset.emb_dim,
        train_dataset.max_len, seed, precision,
    )
    train_config = _resolve_train(settings, opts, seed)
    report, rows, _ = run_cross_corpus(
        train_dataset, test_dataset, model_config, train_config
    )
    out = _prepare_out(out_dir, settings)
    seeds = _seed_echo(seed, train_config)
    write_predictions(rows, out / "predictions.tsv")
    (out / "report.txt").write_text(
        render_report(
            "cross-corpus report",
            report=report,
            config_echo=_config_echo(settings),
            seeds=seeds,
        ),
        encoding="utf-8",
    )
    click.echo(
        f"cross-corpus: P={report.precision:.3f} R={report.recall:.3f} F={report.f1:.3f}"
    )


@main.command()
@common_options
@model_options
@train_options
@click.option("--data", "data_path", default=None, help="Encoded dataset file.")
@click.option("--k", type=int, default=None)
@click.option("--fold-seed", type=int, default=None)
@click.option("--fold-plan", default=None)
@guarded
def ablate(config_path, seed, out_dir, precision, data_path, k, fold_seed,
           fold_plan, **opts):
    """CV runs over the window/channel ablation grid."""
    settings = Settings(config_path)
    seed, precision = _resolve_run(settings, seed, precision)
    data_path = settings.get("paths", "data", data_path, None)
    if not data_path:
        raise click.UsageError("ablate needs --data (or paths.data in the config)")
    dataset = load_dataset(data_path)
    plan, fold_seed = _resolve_plan(settings, dataset, k, fold_seed, fold_plan, seed)
    base_config = _resolve_model(
        settings, opts, dataset.d, dataset.emb_dim, dataset.max_len, seed, precision
    )
    train_config = _resolve_train(settings, opts, seed)
    rows = run_ablation(dataset, plan, base_config, train_config)
    out = _prepare_out(out_dir, settings)
    seeds = _seed_echo(seed, train_config, fold_seed)
    sections = []
    for i, row in enumerate(rows):
        delta = "--" if row.delta_f1 is None else f"{row.delta_f1:+.6f}"
        sections.append(
            (
                f"row {i}",
                [
                    f"name = {row.name}",
                    f"windows = {','.join(str(w) for w in row.config.windows)}",
                    f"channels = {row.config.channels}",
                    f"precision_metric = {row.result.pooled.precision:.6f}",
                    f"recall = {row.result.pooled.recall:.6f}",
                    f"f1 = {row.result.pooled.f1:.6f}",
                    f"delta_f1 = {delta}",
                ],
            )
        )
    (out / "report.txt").write_text(
        render_report(
            "ablation report",
            extra_sections=sections,
            config_echo=_config_echo(settings),
            seeds=seeds,
        ),
        encoding="utf-8",
    )
    for row in rows:
        click.echo(f"{row.name}: F={row.result.pooled.f1:.3f}")


@main.command()
@common_options
@click.option("--data", "data_path", default=None, help="Encoded dataset file.")
@click.option("--checkpoint", "checkpoint_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@guarded
def predict(config_path, seed, out_dir, precision, data_path, checkpoint_path):
    """Label an encoded dataset with a trained checkpoint."""
    settings = Settings(config_path)
    seed, precision = _resolve_run(settings, seed, precision)
    data_path = settings.get("paths", "data", data_path, None)
    checkpoint_path = settings.get("paths", "checkpoint", checkpoint_path, None)
    if not data_path or not checkpoint_path:
        raise click.UsageError("predict needs --data and --checkpoint")
    dataset = load_dataset(data_path)
    ckpt = load_checkpoint(checkpoint_path, expect_schema_hash=dataset.schema_hash)
    if ckpt.config.d != dataset.d or ckpt.config.max_len != dataset.max_len:
        raise ConfigError(
            f"checkpoint expects (max_len={ckpt.config.max_len}, d={ckpt.config.d}) "
            f"but dataset carries (max_len={dataset.max_len}, d={dataset.d})"
        )
    rows = predict_all(dataset.instances, ckpt.params, ckpt.config)
    out = _prepare_out(out_dir, settings)
    write_predictions(rows, out / "predictions.tsv")
    (out / "report.txt").write_text(
        render_report(
            "prediction report",
            report=metrics_from_rows(rows),
            config_echo=_config_echo(settings),
            seeds={"seed": seed},
        ),
        encoding="utf-8",
    )
    click.echo(f"predicted {len(rows)} instances")


@main.command()
@common_options
@click.option("--h", "step", type=float, default=1e-5, show_default=True,
              help="Central-difference step size.")
@guarded
def gradcheck(config_path, seed, out_dir, precision, step):
    """Finite-difference check of every gradient on the reference model."""
    settings = Settings(config_path)
    seed, precision = _resolve_run(settings, seed, precision)
    errors = reference_gradient_check(seed=seed, h=step)
    worst = max(errors.values())
    lines = [f"{name} = {err:.3e}" for name, err in errors.items()]
    lines.append(f"max = {worst:.3e}")
    lines.append(f"tolerance = {GRADCHECK_TOLERANCE:.0e}")
    out = _prepare_out(out_dir, settings)
    (out / "gradcheck.txt").write_text(
        render_report("gradient check", extra_sections=(("max_relative_error", lines),),
                      seeds={"seed": seed}),
        encoding="utf-8",
    )
    for name, err in errors.items():
        click.echo(f"{name}: {err:.3e}")
    click.echo(f"max relative error: {worst:.3e}")
    if worst >= GRADCHECK_TOLERANCE:
        click.echo("error: gradient check failed", err=True)
        sys.exit(4)


if __name__ == "__main__":
    main()
