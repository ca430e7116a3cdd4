"""Supervised and adversarially adapted training loops.

Supervised training minimizes the mean cross-entropy of the matching
classifier over labeled pairs.  Adversarial adaptation replaces the
objective with the SUM of the matching and dataset negative
log-likelihoods: each step draws one labeled source batch (both losses)
and one unlabeled target batch (dataset loss only, since target pairs
have no match labels), backpropagates the combined scalar, and takes one
Adam step.  The gradient-reversal connection between the shared encoder
and the dataset classifier turns the dataset loss into an adversarial
signal for the encoder.
"""

from __future__ import annotations

import csv
import random
import warnings
from dataclasses import dataclass

import numpy as np

from .autodiff import Tape
from .data import ConfigError
from .model import DeepERModel, EncodedPair
from .optim import Adam


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    epochs: int = 20
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 1
    shuffle: bool = True
    objective: str = "cross-entropy"
    threshold: float = 0.5

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.objective != "cross-entropy":
            raise ConfigError(f"unsupported objective {self.objective!r}")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"threshold must lie in (0, 1), got {self.threshold}")


@dataclass
class EvalReport:
    """Precision/recall/F1 as percentages plus the raw confusion counts."""
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int

    def as_dict(self):
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


@dataclass
class TrainCheckpoint:
    """Best-so-far parameter snapshot selected on dev F1 (ties keep the
    earliest epoch)."""
    params: dict[str, np.ndarray]
    epoch: int
    dev: EvalReport


@dataclass
class SourceDataset:
    """One labeled source for adversarial transfer."""
    name: str
    train: list[EncodedPair]
    dev: list[EncodedPair]


class MetricsWriter:
    """Append-only ``epoch,split,precision,recall,f1,loss`` CSV."""

    COLUMNS = ["epoch", "split", "precision", "recall", "f1", "loss"]

    def __init__(self, path):
        self.path = path
        with open(path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerow(self.COLUMNS)

    def write(self, epoch, split, report: EvalReport | None, loss: float | None):
        with open(self.path, "a", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerow([
                epoch, split,
                "" if report is None else f"{report.precision:.6f}",
                "" if report is None else f"{report.recall:.6f}",
                "" if report is None else f"{report.f1:.6f}",
                "" if loss is None else f"{loss:.8f}",
            ])


def confusion(predictions: np.ndarray, gold: np.ndarray) -> tuple[int, int, int, int]:
    pred = np.asarray(predictions).astype(bool)
    true = np.asarray(gold).astype(bool)
    tp = int(np.sum(pred & true))
    fp = int(np.sum(pred & ~true))
    fn = int(np.sum(~pred & true))
    tn = int(np.sum(~pred & ~true))
    return tp, fp, fn, tn


def report_from_counts(tp: int, fp: int, fn: int, tn: int) -> EvalReport:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    return EvalReport(100.0 * precision, 100.0 * recall, 100.0 * f1,
                      tp, fp, fn, tn)


def evaluate(model: DeepERModel, pairs: list[EncodedPair],
             threshold: float = 0.5, batch_size: int = 64) -> EvalReport:
    """Threshold the match probability at ``threshold`` (>= means match)
    and score against the pair labels."""
    if not pairs:
        raise ConfigError("evaluate: no pairs given")
    if any(p.label is None for p in pairs):
        raise ConfigError("evaluate: every pair needs a gold label")
    gold = np.array([p.label for p in pairs], dtype=np.int64)
    probs = model.predict_proba(pairs, batch_size=batch_size)
    preds = probs >= threshold
    return report_from_counts(*confusion(preds, gold))


def _batches(n: int, batch_size: int):
    for lo in range(0, n, batch_size):
        yield lo, min(lo + batch_size, n)


def run_epoch(model: DeepERModel, opt: Adam, pairs: list[EncodedPair],
              cfg: TrainConfig, rng: random.Random) -> float:
    """One pass of matching-loss updates over ``pairs``; returns mean loss."""
    order = list(range(len(pairs)))
    if cfg.shuffle:
        rng.shuffle(order)
    losses = []
    params = model.parameters()
    for lo, hi in _batches(len(order), cfg.batch_size):
        batch = [pairs[i] for i in order[lo:hi]]
        labels = np.array([p.label for p in batch], dtype=np.int64)
        tape = Tape()
        act = model.forward_batch(tape, batch)
        loss, _ = tape.softmax_nll(act["logits"], labels)
        grads = tape.backward(loss, params=params)
        opt.step(grads)
        model.bump_version()
        losses.append(float(loss.data))
    return float(np.mean(losses)) if losses else 0.0


def _check_labels(pairs: list[EncodedPair], what: str) -> None:
    if not pairs:
        raise ConfigError(f"{what}: empty training set")
    labels = {p.label for p in pairs}
    if None in labels:
        raise ConfigError(f"{what}: unlabeled pair in the training set")
    if len(labels) < 2:
        warnings.warn(f"{what}: training labels are single-class; the classifier "
                      "will trivially collapse")


def train_supervised(model: DeepERModel, train_pairs: list[EncodedPair],
                     dev_pairs: list[EncodedPair], cfg: TrainConfig = TrainConfig(),
                     metrics: MetricsWriter | None = None) -> TrainCheckpoint:
    """Epoch loop with dev-F1 model selection; the model is left holding
    the best parameters when the function returns."""
    _check_labels(train_pairs, "train_supervised")
    if not dev_pairs:
        raise ConfigError("train_supervised: empty dev set")
    rng = random.Random(cfg.seed)
    opt = Adam(model.parameters(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    best: TrainCheckpoint | None = None
    for epoch in range(1, cfg.epochs + 1):
        loss = run_epoch(model, opt, train_pairs, cfg, rng)
        model.check_finite()
        report = evaluate(model, dev_pairs, cfg.threshold)
        if metrics is not None:
            metrics.write(epoch, "dev", report, loss)
        if best is None or report.f1 > best.dev.f1:
            best = TrainCheckpoint(model.snapshot(), epoch, report)
    model.restore(best.params)
    return best


def train_adversarial(model: DeepERModel, sources: list[SourceDataset],
                      target_pairs: list[EncodedPair],
                      cfg: TrainConfig = TrainConfig(),
                      metrics: MetricsWriter | None = None) -> TrainCheckpoint:
    """Dataset-adversarial adaptation from labeled sources to an unlabeled
    target.

    Sources are concatenated (each example keeps its own dataset id), an
    epoch walks the shuffled source batches while the target batches
    cycle, and model selection uses F1 on the merged source dev split.
    With no target pairs this degrades to plain supervised training on
    the merged sources, with a warning.
    """
    if not sources:
        raise ConfigError("train_adversarial: need at least one source dataset")
    if model.dataset_names is None:
        raise ConfigError("train_adversarial: model was built without a dataset "
                          "classifier")
    merged_train: list[EncodedPair] = []
    merged_dev: list[EncodedPair] = []
    for src in sources:
        sid = model.dataset_index(src.name)
        for p in src.train:
            p.dataset_id = sid
            merged_train.append(p)
        merged_dev.extend(src.dev)
    _check_labels(merged_train, "train_adversarial")
    if not merged_dev:
        raise ConfigError("train_adversarial: empty source dev set")
    if not target_pairs:
        warnings.warn("train_adversarial: no target pairs; falling back to "
                      "supervised training on the merged sources")
        return train_supervised(model, merged_train, merged_dev, cfg, metrics)
    target_name = model.dataset_names[-1]
    tid = model.dataset_index(target_name)
    for p in target_pairs:
        p.dataset_id = tid

    rng = random.Random(cfg.seed)
    opt = Adam(model.parameters(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    params = model.parameters()
    best: TrainCheckpoint | None = None
    target_cursor = 0
    target_order = list(range(len(target_pairs)))
    for epoch in range(1, cfg.epochs + 1):
        order = list(range(len(merged_train)))
        if cfg.shuffle:
            rng.shuffle(order)
        losses = []
        for lo, hi in _batches(len(order), cfg.batch_size):
            src_batch = [merged_train[i] for i in order[lo:hi]]
            tgt_batch = []
            for _ in range(min(cfg.batch_size, len(target_pairs))):
                if target_cursor == 0 and cfg.shuffle:
                    rng.shuffle(target_order)
                tgt_batch.append(target_pairs[target_order[target_cursor]])
                target_cursor = (target_cursor + 1) % len(target_pairs)

            labels = np.array([p.label for p in src_batch], dtype=np.int64)
            src_ds = np.array([p.dataset_id for p in src_batch], dtype=np.int64)
            tgt_ds = np.array([p.dataset_id for p in tgt_batch], dtype=np.int64)
            tape = Tape()
            src_act = model.forward_batch(tape, src_batch, need_dataset=True)
            match_loss, _ = tape.softmax_nll(src_act["logits"], labels)
            src_ds_loss, _ = tape.softmax_nll(src_act["dataset_logits"], src_ds)
            tgt_act = model.forward_batch(tape, tgt_batch, need_dataset=True)
            tgt_ds_loss, _ = tape.softmax_nll(tgt_act["dataset_logits"], tgt_ds)
            total = tape.sum_tensors([match_loss, src_ds_loss, tgt_ds_loss])
            grads = tape.backward(total, params=params)
            opt.step(grads)
            model.bump_version()
            losses.append(float(total.data))
        model.check_finite()
        report = evaluate(model, merged_dev, cfg.threshold)
        if metrics is not None:
            metrics.write(epoch, "source-dev", report,
                          float(np.mean(losses)) if losses else None)
        if best is None or report.f1 > best.dev.f1:
            best = TrainCheckpoint(model.snapshot(), epoch, report)
    model.restore(best.params)
    return best


def predictions(model: DeepERModel, pairs: list[EncodedPair],
                threshold: float = 0.5) -> np.ndarray:
    return (model.predict_proba(pairs) >= threshold).astype(int)
