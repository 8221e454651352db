"""Losses, the optimization loop, the k-split protocol and the grade task."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import Adam, Tape, Tensor
from .config import TrainConfig
from .embeddings import EmbeddingTable
from .errors import NumericError, ValidationError
from .graphs import GlobalSample, build_samples
from .metrics import (EvalReport, GradeReport, average_reports,
                      classification_report, grade_report, knn_regress_loo)
from .model import Model, SampleOutput
from .streams import Vocabulary, behavior_feature, day_span, slice_day

PROB_FLOOR = 1e-12

# Counts label probabilities that had to be clamped before the log.
_clamp_warnings = 0


def clamp_warning_count() -> int:
    return _clamp_warnings


def reset_clamp_warnings() -> None:
    global _clamp_warnings
    _clamp_warnings = 0


def cross_entropy(probs: list[Tensor], labels: list[int]) -> Tensor:
    """Mean of -log p[label] over the batch; zero probabilities clamp to 1e-12."""
    global _clamp_warnings
    if len(probs) != len(labels) or not probs:
        raise ValidationError("probabilities and labels must pair up")
    terms = []
    for p, y in zip(probs, labels):
        picked = ag.pick(p, y)
        if picked.data <= PROB_FLOOR:
            _clamp_warnings += 1
        terms.append(ag.neg(ag.log(ag.clamp_min(picked, PROB_FLOOR))))
    acc = terms[0]
    for t in terms[1:]:
        acc = ag.add(acc, t)
    return ag.mul(acc, 1.0 / len(terms))


def node_variance_loss(state_matrices: list[Tensor]) -> Tensor:
    """-sigmoid(mean per-dimension population variance) over all node states.

    Fewer than two states degenerate to the value at zero variance (-0.5).
    """
    mats = [m for m in state_matrices if m is not None]
    total_rows = sum(m.data.shape[0] for m in mats)
    if total_rows < 2:
        return ag.constant(-0.5)
    stacked = mats[0] if len(mats) == 1 else ag.concat(mats, axis=0)
    centered = ag.sub_rowvec(stacked, ag.col_mean(stacked))
    variances = ag.col_mean(ag.mul(centered, centered))
    return ag.neg(ag.sigmoid(ag.mean(variances)))


def total_loss(outputs: list[SampleOutput], labels: list[int],
               lam: float) -> Tensor:
    """Classification loss plus lambda times the node variance constraint."""
    ce = cross_entropy([o.probs for o in outputs], labels)
    states = [rep.node_states for o in outputs for rep in o.day_reps]
    return ag.add(ce, ag.mul(node_variance_loss(states), lam))


@dataclass
class TrainResult:
    model: Model
    history: list[dict] = field(default_factory=list)
    best_epoch: int | None = None

    def history_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss,val_accuracy"]
        for row in self.history:
            lines.append("{epoch},{train_loss!r},{val_loss},{val_accuracy}".format(
                epoch=row["epoch"], train_loss=row["train_loss"],
                val_loss="" if row["val_loss"] is None else repr(row["val_loss"]),
                val_accuracy="" if row["val_accuracy"] is None else repr(row["val_accuracy"])))
        return "\n".join(lines) + "\n"


def _batch_eval(model: Model, samples: list[GlobalSample]) -> tuple[float, float]:
    """(mean cross-entropy, accuracy) without gradient recording."""
    losses, correct = [], 0
    for s in samples:
        out = model.forward(s)
        p = max(float(out.probs.data[s.label]), PROB_FLOOR)
        losses.append(-np.log(p))
        correct += int(out.predicted() == s.label)
    return float(np.mean(losses)), correct / len(samples)


def train(samples: list[GlobalSample], config: TrainConfig, table: EmbeddingTable,
          vocab_digest: str = "", dump_dir=None) -> TrainResult:
    """Deterministic Adam training with plateau early stopping.

    A held-out fraction of the training samples drives early stopping when
    the dataset is big enough to spare it; the best-validation parameters are
    restored at the end. A non-finite loss aborts with a dump of the batch.
    """
    if not samples:
        raise ValidationError("empty training set")
    model = Model(config, table, vocab_digest)
    optimizer = Adam(model.parameters(), lr=config.lr)
    rng = np.random.default_rng(config.seed)

    n = len(samples)
    perm = rng.permutation(n)
    val_n = max(1, int(round(n * config.val_fraction))) if n >= 8 else 0
    val_idx = perm[:val_n]
    train_idx = perm[val_n:]
    val_set = [samples[i] for i in val_idx]

    result = TrainResult(model=model)
    best_val = np.inf
    best_snap = None
    stale = 0
    for epoch in range(config.epochs):
        order = rng.permutation(train_idx)
        epoch_losses = []
        for lo in range(0, len(order), config.batch_size):
            batch = [samples[i] for i in order[lo:lo + config.batch_size]]
            labels = [s.label for s in batch]
            optimizer.zero_grad()
            try:
                with Tape() as tape:
                    outputs = [model.forward(s) for s in batch]
                    loss = total_loss(outputs, labels, config.lam)
                value = loss.item()
                if not np.isfinite(value):
                    raise NumericError("loss is not finite")
                tape.backward(loss)
            except NumericError as e:
                _dump_bad_batch(batch, epoch, str(e), dump_dir)
                raise NumericError(
                    f"aborted at epoch {epoch}: {e}; offending batch "
                    f"{[(s.subject, s.anchor_day) for s in batch]}") from e
            optimizer.step()
            epoch_losses.append((value, len(batch)))

        weights = np.array([w for _, w in epoch_losses], dtype=np.float64)
        train_loss = float(np.dot([v for v, _ in epoch_losses], weights) / weights.sum())
        val_loss = val_acc = None
        if val_set:
            val_loss, val_acc = _batch_eval(model, val_set)
        result.history.append({"epoch": epoch, "train_loss": train_loss,
                               "val_loss": val_loss, "val_accuracy": val_acc})
        if val_set:
            if val_loss < best_val - 1e-6:
                best_val = val_loss
                best_snap = model.snapshot()
                result.best_epoch = epoch
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    if best_snap is not None:
        model.restore(best_snap)
    return result


def _dump_bad_batch(batch, epoch, message, dump_dir) -> None:
    if dump_dir is None:
        return
    doc = {"epoch": epoch, "message": message,
           "batch": [{"subject": s.subject, "anchor_day": s.anchor_day,
                      "label": s.label} for s in batch]}
    Path(dump_dir, "nan_batch.json").write_text(json.dumps(doc, indent=2) + "\n",
                                                encoding="utf-8")


def evaluate(model: Model, samples: list[GlobalSample], task: str = "") -> EvalReport:
    if not samples:
        raise ValidationError("no samples to evaluate")
    y_true = [s.label for s in samples]
    y_pred = [model.predict(s) for s in samples]
    return classification_report(y_true, y_pred, task=task)


def split_protocol(n: int, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Deterministic shuffled partition into k disjoint covering test splits."""
    if k > n:
        raise ValidationError(f"cannot make {k} splits from {n} samples")
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(perm, k)
    tasks = []
    for i in range(k):
        test = folds[i]
        train_parts = [folds[j] for j in range(k) if j != i]
        tasks.append((np.concatenate(train_parts), test))
    return tasks


@dataclass
class ProtocolResult:
    reports: list[EvalReport]
    average: EvalReport

    def metrics_rows(self) -> list[dict]:
        return [r.row() for r in self.reports] + [self.average.row()]

    def metrics_csv(self) -> str:
        lines = ["task,n,accuracy,precision,recall,f1"]
        for row in self.metrics_rows():
            lines.append("{task},{n},{accuracy!r},{precision!r},{recall!r},{f1!r}"
                         .format(**row))
        return "\n".join(lines) + "\n"


def run_protocol(samples: list[GlobalSample], config: TrainConfig,
                 table: EmbeddingTable, vocab_digest: str = "") -> ProtocolResult:
    """Train on k-1 splits and test on the held-out one, for every split."""
    tasks = split_protocol(len(samples), config.splits, config.seed)
    reports = []
    for i, (train_ids, test_ids) in enumerate(tasks):
        fit = train([samples[j] for j in train_ids], config, table, vocab_digest)
        reports.append(evaluate(fit.model, [samples[j] for j in test_ids],
                                task=f"task-{i + 1}"))
    return ProtocolResult(reports=reports, average=average_reports(reports))


@dataclass
class GradeResult:
    graph: GradeReport
    handcrafted: GradeReport
    subjects: list[str]


def grade_regression(model: Model, cohort: list[tuple[str, dict, float]],
                     vocab: Vocabulary, config: TrainConfig) -> GradeResult:
    """Leave-one-out KNN grade prediction from frozen graph representations,
    against the per-day duration-vector baseline summed over the term."""
    usable = []
    for subject, streams, gpa in cohort:
        n_days = day_span(streams, config.day_origin)
        if n_days < config.span:
            continue
        usable.append((subject, streams, gpa, n_days))
    if len(usable) < 2:
        raise ValidationError("need at least 2 subjects with a full span of days")

    graph_feats, hand_feats, gpas, names = [], [], [], []
    for subject, streams, gpa, n_days in usable:
        anchors = {d: 0 for d in range(config.span - 1, n_days)}
        windows = build_samples(streams, anchors, config.span, vocab, model.table,
                                subject=subject, day_origin=config.day_origin)
        reps = np.stack([model.representation(s) for s in windows])
        graph_feats.append(reps.mean(axis=0))
        hand = np.zeros(behavior_feature(slice_day(streams, 0, config.day_origin),
                                         vocab).shape)
        for d in range(n_days):
            hand += behavior_feature(slice_day(streams, d, config.day_origin), vocab)
        hand_feats.append(hand)
        gpas.append(gpa)
        names.append(subject)

    gpas = np.array(gpas)
    ours = knn_regress_loo(np.stack(graph_feats), gpas, k=config.knn_k)
    base = knn_regress_loo(np.stack(hand_feats), gpas, k=config.knn_k)
    return GradeResult(graph=grade_report(gpas, ours),
                       handcrafted=grade_report(gpas, base), subjects=names)
