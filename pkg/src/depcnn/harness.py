"""Training loop, metrics, and the cross-validation / evaluation harnesses.

Shuffling uses its own seeded generator, independent of the dropout stream,
so ablations differ only in the factor under study.  Metric pooling across
folds is micro-averaged (summed confusion counts); macro averages are also
reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .checkpoint import SchemaMismatchError
from .corpus import LABEL_PPI, ConfigError, FoldPlan
from .features import EncodedDataset
from .layers import AdamState, NumericError, adam_step
from .network import (
    PPI_INDEX,
    ModelConfig,
    ModelParams,
    forward,
    init_model,
    loss_and_grads,
)


@dataclass
class TrainConfig:
    epochs: int = 250
    batch_size: int = 128
    learning_rate: float = 0.0007
    shuffle_seed: int = 101
    dropout_seed: int = 202
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    checkpoint_interval: int = 0  # epochs between snapshots; 0 disables

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class EvalReport:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, tn: int) -> "EvalReport":
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = (
            2.0 * precision * recall / (precision + recall)
            if precision + recall
            else 0.0
        )
        return cls(tp, fp, fn, tn, precision, recall, f1)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class PredictionRow:
    instance_id: str
    gold: str
    predicted: str
    p_ppi: float


@dataclass
class TrainResult:
    params: ModelParams
    losses: list[float]
    adam: AdamState
    snapshots: list[tuple[int, ModelParams]] = field(default_factory=list)


@dataclass
class CvResult:
    fold_reports: list[EvalReport]
    pooled: EvalReport
    macro: tuple[float, float, float]
    rows: list[PredictionRow]
    plan: FoldPlan


@dataclass
class AblationRow:
    name: str
    config: ModelConfig
    result: CvResult
    delta_f1: float | None


def _batches(order, batch_size):
    for start in range(0, len(order), batch_size):
        yield order[start : start + batch_size]


def train(
    instances,
    model_config: ModelConfig,
    train_config: TrainConfig,
    embedding: np.ndarray | None = None,
) -> TrainResult:
    """Mini-batch Adam training over shuffled epochs.

    Returns the trained parameters, the per-epoch mean loss curve, and the
    optimizer state.  Two runs with equal configs and seeds produce
    bit-identical trajectories in double precision.
    """
    instances = list(instances)
    if not instances:
        raise ConfigError("training set is empty")
    params = init_model(model_config, embedding=embedding)
    adam = AdamState(
        learning_rate=train_config.learning_rate,
        beta1=train_config.beta1,
        beta2=train_config.beta2,
        eps=train_config.eps,
    )
    shuffle_rng = np.random.default_rng(train_config.shuffle_seed)
    dropout_rng = np.random.default_rng(train_config.dropout_seed)
    losses: list[float] = []
    snapshots: list[tuple[int, ModelParams]] = []
    tensors = params.tensors()
    for epoch in range(train_config.epochs):
        order = shuffle_rng.permutation(len(instances))
        epoch_loss = 0.0
        for batch_index, batch_ids in enumerate(_batches(order, train_config.batch_size)):
            batch = [instances[i] for i in batch_ids]
            try:
                loss, grads = loss_and_grads(batch, params, model_config, dropout_rng)
            except NumericError as exc:
                raise NumericError(
                    f"epoch {epoch} batch {batch_index}: {exc}"
                ) from exc
            adam_step(tensors, grads, adam)
            epoch_loss += loss * len(batch)
        losses.append(epoch_loss / len(instances))
        if (
            train_config.checkpoint_interval
            and (epoch + 1) % train_config.checkpoint_interval == 0
        ):
            snapshots.append((epoch + 1, params.copy()))
    return TrainResult(params=params, losses=losses, adam=adam, snapshots=snapshots)


def predict_all(instances, params: ModelParams, config: ModelConfig) -> list[PredictionRow]:
    rows = []
    for inst in instances:
        probs, _ = forward(inst, params, config, mode="infer")
        predicted = LABEL_PPI if probs[PPI_INDEX] > probs[1 - PPI_INDEX] else "OTHER"
        rows.append(
            PredictionRow(inst.instance_id, inst.label, predicted, float(probs[PPI_INDEX]))
        )
    return rows


def compute_metrics(predictions, golds) -> EvalReport:
    """Confusion counts and P/R/F1 with PPI as the positive class."""
    predictions = list(predictions)
    golds = list(golds)
    if len(predictions) != len(golds):
        raise ValueError(
            f"{len(predictions)} predictions against {len(golds)} gold labels"
        )
    tp = fp = fn = tn = 0
    for pred, gold in zip(predictions, golds):
        if gold == LABEL_PPI:
            if pred == LABEL_PPI:
                tp += 1
            else:
                fn += 1
        else:
            if pred == LABEL_PPI:
                fp += 1
            else:
                tn += 1
    return EvalReport.from_counts(tp, fp, fn, tn)


def metrics_from_rows(rows) -> EvalReport:
    return compute_metrics([r.predicted for r in rows], [r.gold for r in rows])


def _dataset_instances(dataset):
    return list(dataset.instances) if isinstance(dataset, EncodedDataset) else list(dataset)


def run_cv(
    dataset,
    plan: FoldPlan,
    model_config: ModelConfig,
    train_config: TrainConfig,
) -> CvResult:
    """Train and score one model per fold; pool counts across folds."""
    instances = _dataset_instances(dataset)
    embedding = getattr(dataset, "embedding_matrix", None)
    plan.validate_partition({inst.doc_id for inst in instances})
    fold_reports: list[EvalReport] = []
    rows: list[PredictionRow] = []
    for fold_index, (train_docs, test_docs) in enumerate(plan.folds):
        train_docs, test_docs = set(train_docs), set(test_docs)
        train_set = [i for i in instances if i.doc_id in train_docs]
        test_set = [i for i in instances if i.doc_id in test_docs]
        if not test_set:
            raise ConfigError(f"fold {fold_index} has no test instances")
        if not train_set:
            raise ConfigError(f"fold {fold_index} has no training instances")
        result = train(train_set, model_config, train_config, embedding=embedding)
        fold_rows = predict_all(test_set, result.params, model_config)
        rows.extend(fold_rows)
        fold_reports.append(metrics_from_rows(fold_rows))
    pooled = EvalReport.from_counts(
        sum(r.tp for r in fold_reports),
        sum(r.fp for r in fold_reports),
        sum(r.fn for r in fold_reports),
        sum(r.tn for r in fold_reports),
    )
    macro = (
        float(np.mean([r.precision for r in fold_reports])),
        float(np.mean([r.recall for r in fold_reports])),
        float(np.mean([r.f1 for r in fold_reports])),
    )
    return CvResult(fold_reports, pooled, macro, rows, plan)


def run_cross_corpus(
    train_dataset: EncodedDataset,
    test_dataset: EncodedDataset,
    model_config: ModelConfig,
    train_config: TrainConfig,
):
    """Train once on the full first corpus, evaluate on the second."""
    if train_dataset.schema_hash != test_dataset.schema_hash:
        raise SchemaMismatchError(
            "train and test corpora were encoded under different schemas "
            f"({train_dataset.schema_hash[:12]}... vs {test_dataset.schema_hash[:12]}...)"
        )
    result = train(
        train_dataset.instances,
        model_config,
        train_config,
        embedding=train_dataset.embedding_matrix,
    )
    rows = predict_all(test_dataset.instances, result.params, model_config)
    return metrics_from_rows(rows), rows, result


def run_difficult_subset(
    dataset,
    plan: FoldPlan,
    model_config: ModelConfig,
    train_config: TrainConfig,
):
    """CV evaluation restricted to instances carrying the difficult flag,
    so each flagged instance is scored by a model not trained on its
    document."""
    instances = _dataset_instances(dataset)
    flagged = {inst.instance_id for inst in instances if inst.difficult}
    if not flagged:
        raise ConfigError("no instances carry the difficult flag")
    cv = run_cv(dataset, plan, model_config, train_config)
    rows = [row for row in cv.rows if row.instance_id in flagged]
    return metrics_from_rows(rows), rows, cv


ABLATION_SPECS = (
    ("window=3", (3,), 2),
    ("window=3,5", (3, 5), 2),
    ("window=3,5,7", (3, 5, 7), 2),
    ("single-channel window=3", (3,), 1),
)


def run_ablation(
    dataset,
    plan: FoldPlan,
    base_config: ModelConfig,
    train_config: TrainConfig,
) -> list[AblationRow]:
    """One CV run per architecture variant, with F1 deltas against row 0."""
    out: list[AblationRow] = []
    baseline_f1: float | None = None
    for name, windows, channels in ABLATION_SPECS:
        config = replace(base_config, windows=windows, channels=channels)
        result = run_cv(dataset, plan, config, train_config)
        delta = None if baseline_f1 is None else result.pooled.f1 - baseline_f1
        if baseline_f1 is None:
            baseline_f1 = result.pooled.f1
        out.append(AblationRow(name, config, result, delta))
    return out


# -- file interfaces ----------------------------------------------------------------


def write_fold_plan(plan: FoldPlan, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for index, (train_docs, test_docs) in enumerate(plan.folds):
            for doc in train_docs:
                fh.write(f"{index}\t{doc}\ttrain\n")
            for doc in test_docs:
                fh.write(f"{index}\t{doc}\ttest\n")


def read_fold_plan(path) -> FoldPlan:
    by_fold: dict[int, tuple[list[str], list[str]]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_number, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3 or parts[2] not in ("train", "test"):
                raise ConfigError(f"{path}:{line_number}: bad fold plan line {line!r}")
            try:
                index = int(parts[0])
            except ValueError:
                raise ConfigError(
                    f"{path}:{line_number}: bad fold index {parts[0]!r}"
                ) from None
            train_docs, test_docs = by_fold.setdefault(index, ([], []))
            (train_docs if parts[2] == "train" else test_docs).append(parts[1])
    if not by_fold:
        raise ConfigError(f"{path}: empty fold plan")
    if sorted(by_fold) != list(range(len(by_fold))):
        raise ConfigError(f"{path}: fold indices must be contiguous from 0")
    folds = tuple(
        (tuple(sorted(by_fold[i][0])), tuple(sorted(by_fold[i][1])))
        for i in range(len(by_fold))
    )
    return FoldPlan(folds)


def write_predictions(rows, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(
                f"{row.instance_id}\t{row.gold}\t{row.predicted}\t{row.p_ppi:.6f}\n"
            )


def read_predictions(path) -> list[PredictionRow]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            instance_id, gold, predicted, p_ppi = line.split("\t")
            rows.append(PredictionRow(instance_id, gold, predicted, float(p_ppi)))
    return rows


def _metric_lines(report: EvalReport) -> list[str]:
    return [
        f"tp = {report.tp}",
        f"fp = {report.fp}",
        f"fn = {report.fn}",
        f"tn = {report.tn}",
        f"precision = {report.precision:.6f}",
        f"recall = {report.recall:.6f}",
        f"f1 = {report.f1:.6f}",
    ]


def render_report(
    title: str,
    report: EvalReport | None = None,
    fold_reports=None,
    macro=None,
    extra_sections=None,
    config_echo=None,
    seeds=None,
) -> str:
    """Deterministic plain-text report: counts, metrics, config echo, seeds."""
    lines = [f"# {title}"]
    if report is not None:
        lines.append("[metrics]")
        lines.extend(_metric_lines(report))
    if fold_reports:
        for i, fold in enumerate(fold_reports):
            lines.append(f"[fold {i}]")
            lines.extend(_metric_lines(fold))
    if macro is not None:
        lines.append("[macro]")
        lines.append(f"precision = {macro[0]:.6f}")
        lines.append(f"recall = {macro[1]:.6f}")
        lines.append(f"f1 = {macro[2]:.6f}")
    for section, body in extra_sections or ():
        lines.append(f"[{section}]")
        lines.extend(body)
    if config_echo:
        lines.append("[config]")
        for key in sorted(config_echo):
            lines.append(f"{key} = {config_echo[key]}")
    if seeds:
        lines.append("[seeds]")
        for key in sorted(seeds):
            lines.append(f"{key} = {seeds[key]}")
    return "\n".join(lines) + "\n"
