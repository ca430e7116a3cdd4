"""Uncertainty- and confidence-driven labeling loop.

Each iteration:

  1. refresh the cached match probabilities of the unlabeled pool,
  2. partition the pool at p >= 0.5 into predicted matches / non-matches,
  3. take the k = K/2 highest-entropy pairs from each side (the likely
     false positives and likely false negatives), hand them to the
     annotator, remove them from the pool, and add them to the labeled
     set with human provenance,
  4. take the k lowest-entropy pairs from each side of the REMAINING
     pool (recomputed from the cached probabilities) and add them with
     their predicted labels as proxy examples,
  5. warm-start retrain for up to I epochs, tracking F1 on the labeled
     set and restoring the best weights seen.

Selection depends on probabilities only through the entropy RANKS, so
any strictly increasing transform of the entropy leaves every pick
unchanged.  Ties break toward the ascending pair id; a partition with
fewer than k members yields a recorded shortfall, never a substitute
pick from the other side.
"""

from __future__ import annotations

import csv
import random
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .data import ConfigError
from .model import DeepERModel, EncodedPair
from .optim import Adam
from .training import TrainConfig, evaluate, run_epoch

HUMAN = "human"
PROXY_POSITIVE = "proxy-positive"
PROXY_NEGATIVE = "proxy-negative"
SEED = "seed"

STRATEGIES = ("partition-high-confidence", "partition-only",
              "high-confidence-only", "topk-entropy")


class AnnotatorError(RuntimeError):
    """The annotator failed to produce the requested labels."""


def entropy(p):
    """Binary prediction entropy -p ln p - (1-p) ln (1-p) in nats, with
    0 ln 0 taken as 0.  Accepts a scalar or an array; rejects values
    outside [0, 1]."""
    arr = np.asarray(p, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"probability outside [0, 1]: {p!r}")
    with np.errstate(divide="ignore", invalid="ignore"):
        left = np.where(arr > 0.0, -arr * np.log(arr), 0.0)
        right = np.where(arr < 1.0, -(1.0 - arr) * np.log1p(-arr), 0.0)
    out = left + right
    return float(out) if np.isscalar(p) or arr.ndim == 0 else out


class UnlabeledPool:
    """The candidate pairs still awaiting a label, with cached per-pair
    match probabilities stamped by the model version that produced them."""

    def __init__(self, pairs: Iterable[EncodedPair]):
        self.pairs: dict[str, EncodedPair] = {}
        for p in pairs:
            if p.pair_id in self.pairs:
                raise ConfigError(f"duplicate pair id {p.pair_id!r} in pool")
            self.pairs[p.pair_id] = p
        self.probs: dict[str, float] = {}
        self.stamp: int | None = None

    def __len__(self):
        return len(self.pairs)

    def __contains__(self, pair_id: str) -> bool:
        return pair_id in self.pairs

    def refresh(self, model: DeepERModel, batch_size: int = 64) -> None:
        ids = list(self.pairs)
        probs = model.predict_proba([self.pairs[i] for i in ids], batch_size)
        self.probs = dict(zip(ids, probs.tolist()))
        self.stamp = model.version

    def check_fresh(self, model: DeepERModel) -> None:
        if self.stamp != model.version:
            raise ConfigError("pool probabilities are stale; call refresh() after "
                              "every parameter update")

    def remove(self, ids: Iterable[str]) -> list[EncodedPair]:
        out = []
        for i in ids:
            out.append(self.pairs.pop(i))
            self.probs.pop(i, None)
        return out


@dataclass
class LabeledExample:
    pair: EncodedPair
    label: int
    provenance: str
    model_version: int | None = None


class LabeledSet:
    """One entry per pair id; proxy labels may be replaced (by a human or
    a newer proxy) but a human label is never overwritten."""

    def __init__(self):
        self.items: dict[str, LabeledExample] = {}

    def __len__(self):
        return len(self.items)

    def __contains__(self, pair_id: str) -> bool:
        return pair_id in self.items

    def add(self, pair: EncodedPair, label: int, provenance: str,
            model_version: int | None = None) -> None:
        if label not in (0, 1):
            raise ConfigError(f"label must be 0 or 1, got {label!r}")
        if provenance not in (HUMAN, PROXY_POSITIVE, PROXY_NEGATIVE, SEED):
            raise ConfigError(f"unknown provenance {provenance!r}")
        existing = self.items.get(pair.pair_id)
        if existing is not None and existing.provenance == HUMAN and provenance != HUMAN:
            raise ConfigError(f"refusing to overwrite the human label of "
                              f"{pair.pair_id!r} with a proxy label")
        self.items[pair.pair_id] = LabeledExample(
            pair.relabeled(label), label, provenance, model_version)

    def training_pairs(self) -> list[EncodedPair]:
        return [ex.pair for ex in self.items.values()]

    def count(self, provenance: str) -> int:
        return sum(1 for ex in self.items.values() if ex.provenance == provenance)


@dataclass(frozen=True)
class ALConfig:
    """Loop parameters: K picks per iteration (k = K/2 per partition side),
    T iterations, and I warm-start epochs per retrain."""
    k_per_iteration: int = 20
    iterations: int = 10
    inner_epochs: int = 20
    strategy: str = "partition-high-confidence"
    remove_high_confidence: bool = True
    inner_eval: str = "labeled"      # or "dev": see run_dtal(dev_pairs=...)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.k_per_iteration < 2 or self.k_per_iteration % 2:
            raise ConfigError(f"K must be an even number >= 2, got "
                              f"{self.k_per_iteration}")
        if self.iterations < 1:
            raise ConfigError(f"T must be >= 1, got {self.iterations}")
        if self.inner_epochs < 1:
            raise ConfigError(f"I must be >= 1, got {self.inner_epochs}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; "
                              f"choose from {STRATEGIES}")
        if self.inner_eval not in ("labeled", "dev"):
            raise ConfigError(f"inner_eval must be 'labeled' or 'dev', got "
                              f"{self.inner_eval!r}")

    @property
    def half_k(self) -> int:
        return self.k_per_iteration // 2


@dataclass
class SelectionResult:
    """The four pairwise-disjoint pick sets of one iteration."""
    likely_fp: list[str]
    likely_fn: list[str]
    high_conf_pos: list[str]
    high_conf_neg: list[str]
    probabilities: dict[str, float]
    shortfalls: dict[str, int] = field(default_factory=dict)

    @property
    def human_ids(self) -> list[str]:
        return self.likely_fp + self.likely_fn

    @property
    def proxy_ids(self) -> list[str]:
        return self.high_conf_pos + self.high_conf_neg


@dataclass
class IterationLog:
    iteration: int
    human_labels: int
    proxy_labels: int
    fp: int | None
    tp: int | None
    fn: int | None
    tn: int | None
    f1_on_labeled: float
    pool_size: int
    labeled_size: int
    f1_trajectory: list[float] = field(default_factory=list)
    shortfalls: dict[str, int] = field(default_factory=dict)
    test_f1: float | None = None

    def as_row(self) -> list:
        blank = lambda v: "" if v is None else v
        return [self.iteration, self.human_labels, self.proxy_labels,
                blank(self.fp), blank(self.tp), blank(self.fn), blank(self.tn),
                f"{self.f1_on_labeled:.6f}",
                "" if self.test_f1 is None else f"{self.test_f1:.6f}"]


class IterationWriter:
    COLUMNS = ["iter", "human_labels", "proxy_labels", "fp", "tp", "fn", "tn",
               "f1_on_labeled", "test_f1"]

    def __init__(self, path):
        self.path = path
        with open(path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerow(self.COLUMNS)

    def write(self, log: IterationLog):
        with open(self.path, "a", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerow(log.as_row())


# --------------------------------------------------------------------------
# selection primitives


def partition(pool: UnlabeledPool) -> tuple[list[str], list[str]]:
    """Split the pool ids at p >= 0.5 into (predicted match, predicted
    non-match), preserving pool order."""
    match, non_match = [], []
    for pid in pool.pairs:
        if pool.probs[pid] >= 0.5:
            match.append(pid)
        else:
            non_match.append(pid)
    return match, non_match


def _top_by_entropy(ids: list[str], probs: Mapping[str, float], k: int,
                    entropy_fn: Callable, reverse: bool) -> list[str]:
    # rank on (entropy, id): ties always break toward the ascending id
    if reverse:
        ranked = sorted(ids, key=lambda i: (-entropy_fn(probs[i]), i))
    else:
        ranked = sorted(ids, key=lambda i: (entropy_fn(probs[i]), i))
    return ranked[:k]


def select_uncertain(pool: UnlabeledPool, k: int, entropy_fn: Callable = entropy,
                     ) -> tuple[list[str], list[str], dict[str, int]]:
    """Top-k entropy ids per partition side: (likely_fp, likely_fn,
    shortfalls).  A side with fewer than k members yields what it has."""
    match, non_match = partition(pool)
    fp = _top_by_entropy(match, pool.probs, k, entropy_fn, reverse=True)
    fn = _top_by_entropy(non_match, pool.probs, k, entropy_fn, reverse=True)
    shortfalls = {}
    if len(fp) < k:
        shortfalls["likely_fp"] = k - len(fp)
    if len(fn) < k:
        shortfalls["likely_fn"] = k - len(fn)
    return fp, fn, shortfalls


def select_high_confidence(pool: UnlabeledPool, k: int, exclude: set[str],
                           entropy_fn: Callable = entropy,
                           ) -> tuple[list[str], list[str], dict[str, int]]:
    """Bottom-k entropy ids per partition side of the pool minus
    ``exclude``, using the probabilities cached at refresh time."""
    match, non_match = partition(pool)
    match = [i for i in match if i not in exclude]
    non_match = [i for i in non_match if i not in exclude]
    pos = _top_by_entropy(match, pool.probs, k, entropy_fn, reverse=False)
    neg = _top_by_entropy(non_match, pool.probs, k, entropy_fn, reverse=False)
    shortfalls = {}
    if len(pos) < k:
        shortfalls["high_conf_pos"] = k - len(pos)
    if len(neg) < k:
        shortfalls["high_conf_neg"] = k - len(neg)
    return pos, neg, shortfalls


def select_topk_entropy(pool: UnlabeledPool, k: int,
                        entropy_fn: Callable = entropy) -> list[str]:
    """Plain global top-K entropy selection (the ablation sampler)."""
    return _top_by_entropy(list(pool.pairs), pool.probs, k, entropy_fn,
                           reverse=True)


def compute_selection(pool: UnlabeledPool, cfg: ALConfig,
                      entropy_fn: Callable = entropy) -> SelectionResult:
    """Assemble the iteration's pick sets under the configured strategy."""
    k = cfg.half_k
    probs = dict(pool.probs)
    if cfg.strategy == "topk-entropy":
        picked = select_topk_entropy(pool, cfg.k_per_iteration, entropy_fn)
        fp = [i for i in picked if probs[i] >= 0.5]
        fn = [i for i in picked if probs[i] < 0.5]
        short = {}
        if len(picked) < cfg.k_per_iteration:
            short["uncertain"] = cfg.k_per_iteration - len(picked)
        return SelectionResult(fp, fn, [], [], probs, short)
    if cfg.strategy == "high-confidence-only":
        picked = select_topk_entropy(pool, cfg.k_per_iteration, entropy_fn)
        fp = [i for i in picked if probs[i] >= 0.5]
        fn = [i for i in picked if probs[i] < 0.5]
        short = {}
        if len(picked) < cfg.k_per_iteration:
            short["uncertain"] = cfg.k_per_iteration - len(picked)
        pos, neg, hc_short = select_high_confidence(pool, k, set(picked), entropy_fn)
        short.update(hc_short)
        return SelectionResult(fp, fn, pos, neg, probs, short)
    fp, fn, short = select_uncertain(pool, k, entropy_fn)
    if cfg.strategy == "partition-only":
        return SelectionResult(fp, fn, [], [], probs, short)
    pos, neg, hc_short = select_high_confidence(pool, k, set(fp) | set(fn),
                                                entropy_fn)
    short.update(hc_short)
    return SelectionResult(fp, fn, pos, neg, probs, short)


# --------------------------------------------------------------------------
# annotators


class Annotator(ABC):
    """Maps requested pairs to labels; must answer every requested id."""

    @abstractmethod
    def label(self, pairs: list[EncodedPair]) -> dict[str, int]:
        ...


class OracleAnnotator(Annotator):
    """Answers from gold labels (the pair's own label by default)."""

    def __init__(self, gold: Mapping[str, int] | None = None):
        self.gold = gold

    def label(self, pairs: list[EncodedPair]) -> dict[str, int]:
        out = {}
        for p in pairs:
            if self.gold is not None:
                if p.pair_id not in self.gold:
                    raise AnnotatorError(f"oracle has no gold label for {p.pair_id!r}")
                out[p.pair_id] = int(self.gold[p.pair_id])
            else:
                if p.label is None:
                    raise AnnotatorError(f"pair {p.pair_id!r} carries no gold label")
                out[p.pair_id] = int(p.label)
        return out


class CallbackAnnotator(Annotator):
    """Defers to a callable; used by the served labeling sessions."""

    def __init__(self, fn: Callable[[list[EncodedPair]], dict[str, int]]):
        self.fn = fn

    def label(self, pairs: list[EncodedPair]) -> dict[str, int]:
        return self.fn(pairs)


# --------------------------------------------------------------------------
# the loop


def _breakdown(selection: SelectionResult,
               gold: Mapping[str, int] | None) -> tuple:
    """Confusion counts of the model's predictions on the human picks,
    judged against gold when it is available."""
    if gold is None:
        return None, None, None, None
    fp = tp = fn = tn = 0
    for pid in selection.likely_fp:          # predicted match
        if gold.get(pid) == 1:
            tp += 1
        else:
            fp += 1
    for pid in selection.likely_fn:          # predicted non-match
        if gold.get(pid) == 1:
            fn += 1
        else:
            tn += 1
    return fp, tp, fn, tn


def al_iteration(pool: UnlabeledPool, labeled: LabeledSet, model: DeepERModel,
                 annotator: Annotator, cfg: ALConfig, iteration: int,
                 rng: random.Random, *,
                 gold: Mapping[str, int] | None = None,
                 test_pairs: list[EncodedPair] | None = None,
                 dev_pairs: list[EncodedPair] | None = None,
                 selection: SelectionResult | None = None,
                 entropy_fn: Callable = entropy) -> IterationLog:
    """One full iteration.  The annotator is consulted before any state
    changes, so an annotator failure aborts with pool, labeled set, and
    model untouched."""
    if selection is None:
        pool.refresh(model, cfg.train.batch_size * 4)
        selection = compute_selection(pool, cfg, entropy_fn)
    else:
        pool.check_fresh(model)
    human_ids = selection.human_ids
    human_labels: dict[str, int] = {}
    if human_ids:
        human_labels = annotator.label([pool.pairs[i] for i in human_ids])
        missing = [i for i in human_ids if i not in human_labels]
        if missing:
            raise AnnotatorError(f"annotator returned no label for {missing}")

    # ---- mutations start only after the annotator has fully answered ----
    version = model.version
    for pid in human_ids:
        labeled.add(pool.pairs[pid], human_labels[pid], HUMAN, version)
    pool.remove(human_ids)
    for pid in selection.high_conf_pos:
        labeled.add(pool.pairs[pid], 1, PROXY_POSITIVE, version)
    for pid in selection.high_conf_neg:
        labeled.add(pool.pairs[pid], 0, PROXY_NEGATIVE, version)
    if cfg.remove_high_confidence:
        pool.remove(selection.proxy_ids)

    # ---- warm-start retrain, restoring the best weights we see ----
    train_pairs = labeled.training_pairs()
    eval_pairs = dev_pairs if (cfg.inner_eval == "dev" and dev_pairs) else train_pairs
    trajectory: list[float] = []
    best_f1, best_snap = -1.0, None
    if train_pairs:
        opt = Adam(model.parameters(), cfg.train.learning_rate,
                   cfg.train.beta1, cfg.train.beta2, cfg.train.eps)
        for _ in range(cfg.inner_epochs):
            run_epoch(model, opt, train_pairs, cfg.train, rng)
            f1 = evaluate(model, eval_pairs, cfg.train.threshold).f1
            trajectory.append(f1)
            if f1 > best_f1:
                best_f1, best_snap = f1, model.snapshot()
        model.restore(best_snap)

    fp, tp, fn, tn = _breakdown(selection, gold)
    test_f1 = None
    if test_pairs:
        test_f1 = evaluate(model, test_pairs, cfg.train.threshold).f1
    return IterationLog(
        iteration=iteration,
        human_labels=len(human_ids),
        proxy_labels=len(selection.proxy_ids),
        fp=fp, tp=tp, fn=fn, tn=tn,
        f1_on_labeled=max(best_f1, 0.0),
        pool_size=len(pool),
        labeled_size=len(labeled),
        f1_trajectory=trajectory,
        shortfalls=dict(selection.shortfalls),
        test_f1=test_f1,
    )


def run_dtal(pool: UnlabeledPool, model: DeepERModel, annotator: Annotator,
             cfg: ALConfig, *,
             labeled: LabeledSet | None = None,
             gold: Mapping[str, int] | None = None,
             test_pairs: list[EncodedPair] | None = None,
             dev_pairs: list[EncodedPair] | None = None,
             writer: IterationWriter | None = None,
             entropy_fn: Callable = entropy,
             ) -> tuple[LabeledSet, list[IterationLog]]:
    """Run up to T iterations, stopping early if the pool empties.

    The model is taken as-is: hand in a transfer-trained model for the
    transfer-initialized variant or a freshly constructed one for the
    random-initialization variant.
    """
    labeled = labeled if labeled is not None else LabeledSet()
    rng = random.Random(cfg.train.seed)
    logs: list[IterationLog] = []
    for it in range(1, cfg.iterations + 1):
        if not len(pool):
            break
        log = al_iteration(pool, labeled, model, annotator, cfg, it, rng,
                           gold=gold, test_pairs=test_pairs, dev_pairs=dev_pairs,
                           entropy_fn=entropy_fn)
        logs.append(log)
        if writer is not None:
            writer.write(log)
    return labeled, logs


def gold_map(pairs: Iterable[EncodedPair]) -> dict[str, int]:
    """Gold labels keyed by pair id, for oracle runs on labeled corpora."""
    out = {}
    for p in pairs:
        if p.label is not None:
            out[p.pair_id] = int(p.label)
    return out
