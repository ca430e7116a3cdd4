"""Feature-engineering baselines.

Every attribute contributes six similarity features, in this order:

  qgram      q-gram Jaccard (q = 3)
  cosine     cosine over token count vectors
  lev_dist   Levenshtein distance normalized by the longer string
  lev_sim    1 - lev_dist
  monge_elkan  symmetrized Monge-Elkan with Jaro-Winkler inside
  exact      string equality after lowercasing

All features live in [0, 1].  On top of the stacked feature vectors sit
two shallow learners: full-batch gradient-descent logistic regression
and Gaussian naive Bayes with a variance floor.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .data import CandidateSet, ConfigError, RecordPair, qgram_jaccard

FEATURE_FUNCS = ["qgram", "cosine", "lev_dist", "lev_sim", "monge_elkan", "exact"]


# --------------------------------------------------------------------------
# string similarity primitives


def levenshtein(s1: str, s2: str) -> int:
    """Classic edit distance (insert / delete / substitute, unit costs),
    computed with the two-row dynamic program."""
    if len(s1) < len(s2):
        s1, s2 = s2, s1
    if not s2:
        return len(s1)
    prev = list(range(len(s2) + 1))
    for i, c1 in enumerate(s1, start=1):
        curr = [i]
        for j, c2 in enumerate(s2, start=1):
            curr.append(min(prev[j] + 1,          # deletion
                            curr[j - 1] + 1,      # insertion
                            prev[j - 1] + (c1 != c2)))
        prev = curr
    return prev[-1]


def levenshtein_norm(s1: str, s2: str) -> float:
    """Distance scaled into [0, 1] by the longer string; two empty strings
    are at distance 0."""
    longest = max(len(s1), len(s2))
    if longest == 0:
        return 0.0
    return levenshtein(s1, s2) / longest


def levenshtein_sim(s1: str, s2: str) -> float:
    return 1.0 - levenshtein_norm(s1, s2)


def jaro(s1: str, s2: str) -> float:
    if s1 == s2:
        return 1.0
    if not s1 or not s2:
        return 0.0
    window = max(len(s1), len(s2)) // 2 - 1
    window = max(window, 0)
    flags1 = [False] * len(s1)
    flags2 = [False] * len(s2)
    matches = 0
    for i, c in enumerate(s1):
        lo, hi = max(0, i - window), min(len(s2), i + window + 1)
        for j in range(lo, hi):
            if not flags2[j] and s2[j] == c:
                flags1[i] = flags2[j] = True
                matches += 1
                break
    if not matches:
        return 0.0
    transpositions = 0
    j = 0
    for i, c in enumerate(s1):
        if flags1[i]:
            while not flags2[j]:
                j += 1
            if c != s2[j]:
                transpositions += 1
            j += 1
    t = transpositions / 2
    m = matches
    return (m / len(s1) + m / len(s2) + (m - t) / m) / 3.0


def jaro_winkler(s1: str, s2: str, prefix_scale: float = 0.1,
                 max_prefix: int = 4) -> float:
    base = jaro(s1, s2)
    prefix = 0
    for c1, c2 in zip(s1, s2):
        if c1 != c2 or prefix == max_prefix:
            break
        prefix += 1
    return base + prefix * prefix_scale * (1.0 - base)


def monge_elkan_directed(tokens1: list[str], tokens2: list[str]) -> float:
    """Mean over tokens1 of the best Jaro-Winkler match in tokens2."""
    if not tokens1 or not tokens2:
        return 0.0
    return sum(max(jaro_winkler(a, b) for b in tokens2) for a in tokens1) \
        / len(tokens1)


def monge_elkan(tokens1: list[str], tokens2: list[str]) -> float:
    """Directed Monge-Elkan averaged over both directions, so the feature
    is symmetric; an empty token list on either side scores 0."""
    if not tokens1 or not tokens2:
        return 0.0
    return 0.5 * (monge_elkan_directed(tokens1, tokens2)
                  + monge_elkan_directed(tokens2, tokens1))


def cosine_tokens(tokens1: list[str], tokens2: list[str]) -> float:
    """Cosine of token count vectors; either side empty -> 0."""
    t1, t2 = tokens1, tokens2
    if not t1 or not t2:
        return 0.0
    c1: dict[str, int] = {}
    c2: dict[str, int] = {}
    for t in t1:
        c1[t] = c1.get(t, 0) + 1
    for t in t2:
        c2[t] = c2.get(t, 0) + 1
    dot = sum(c1[t] * c2.get(t, 0) for t in c1)
    n1 = math.sqrt(sum(v * v for v in c1.values()))
    n2 = math.sqrt(sum(v * v for v in c2.values()))
    return min(1.0, dot / (n1 * n2))  # rounding may nudge past 1


# --------------------------------------------------------------------------
# feature extraction


def pair_features(pair: RecordPair, schema: list[str], q: int = 3) -> np.ndarray:
    """Six similarities per schema attribute, lowercased inputs.

    NULL conventions follow from the primitives: a NULL-vs-NULL attribute
    yields qgram 1, cosine 0, lev_sim 1, monge_elkan 0, exact 1.
    """
    if not schema:
        raise ConfigError("pair_features: empty schema")
    out = np.zeros(6 * len(schema))
    for j, attr in enumerate(schema):
        a = pair.left.get(attr, "").lower()
        b = pair.right.get(attr, "").lower()
        base = 6 * j
        out[base + 0] = qgram_jaccard(a, b, q)
        out[base + 1] = cosine_tokens(a.split(), b.split())
        nd = levenshtein_norm(a, b)
        out[base + 2] = nd
        out[base + 3] = 1.0 - nd
        out[base + 4] = monge_elkan(a.split(), b.split())
        out[base + 5] = 1.0 if a == b else 0.0
    return out


def extract_features(candidates: CandidateSet | list[RecordPair],
                     schema: list[str] | None = None, q: int = 3) -> np.ndarray:
    pairs = candidates.pairs if isinstance(candidates, CandidateSet) else candidates
    if schema is None:
        if not isinstance(candidates, CandidateSet):
            raise ConfigError("extract_features: schema required for a bare "
                              "pair list")
        schema = candidates.schema
    return np.vstack([pair_features(p, schema, q) for p in pairs]) \
        if pairs else np.zeros((0, 6 * len(schema)))


def feature_names(schema: list[str]) -> list[str]:
    return [f"{attr}.{fn}" for attr in schema for fn in FEATURE_FUNCS]


def write_feature_dump(path, features: np.ndarray, schema: list[str],
                       pairs: list[RecordPair]) -> None:
    """CSV dump with an ``attr.func`` header per feature column."""
    import csv
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["left_id", "right_id", *feature_names(schema)])
        for p, row in zip(pairs, features):
            writer.writerow([p.left_id, p.right_id,
                             *(f"{v:.6f}" for v in row)])


# --------------------------------------------------------------------------
# logistic regression


@dataclass
class LogRegParams:
    weights: np.ndarray
    bias: float


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def predict_logreg(params: LogRegParams, features: np.ndarray) -> np.ndarray:
    """Match probability; all-zero parameters give exactly 0.5."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    return _sigmoid(x @ params.weights + params.bias)


def train_logreg(features: np.ndarray, labels: np.ndarray, lr: float = 0.5,
                 epochs: int = 200) -> LogRegParams:
    """Full-batch gradient descent on the mean logistic loss, starting
    from zero weights (deterministic, no regularization)."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ConfigError(f"train_logreg: features {x.shape} vs labels {y.shape}")
    if x.shape[0] == 0:
        raise ConfigError("train_logreg: empty training set")
    if len(np.unique(y)) < 2:
        warnings.warn("train_logreg: single-class training labels")
    w = np.zeros(x.shape[1])
    b = 0.0
    n = x.shape[0]
    for _ in range(epochs):
        p = _sigmoid(x @ w + b)
        err = p - y
        w -= lr * (x.T @ err) / n
        b -= lr * err.mean()
    return LogRegParams(w, b)


# --------------------------------------------------------------------------
# Gaussian naive Bayes


@dataclass
class GnbParams:
    priors: np.ndarray        # (2,)
    means: np.ndarray         # (2, d)
    variances: np.ndarray     # (2, d), floored

    VAR_FLOOR = 1e-9


def train_gnb(features: np.ndarray, labels: np.ndarray) -> GnbParams:
    """Closed-form class priors and per-feature Gaussian moments; the
    variance floor keeps constant features from producing zero variance."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ConfigError(f"train_gnb: features {x.shape} vs labels {y.shape}")
    classes = np.unique(y)
    if not np.array_equal(classes, np.array([0, 1])):
        raise ConfigError("train_gnb: need both classes present, got "
                          f"{classes.tolist()}")
    priors = np.zeros(2)
    means = np.zeros((2, x.shape[1]))
    variances = np.zeros((2, x.shape[1]))
    for c in (0, 1):
        rows = x[y == c]
        priors[c] = len(rows) / len(x)
        means[c] = rows.mean(axis=0)
        variances[c] = np.maximum(rows.var(axis=0), GnbParams.VAR_FLOOR)
    return GnbParams(priors, means, variances)


def predict_gnb(params: GnbParams, features: np.ndarray) -> np.ndarray:
    """P(match | x) from the two Gaussian log-densities plus log priors."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    logp = np.zeros((x.shape[0], 2))
    for c in (0, 1):
        var = params.variances[c]
        logp[:, c] = (np.log(params.priors[c])
                      - 0.5 * np.sum(np.log(2.0 * np.pi * var))
                      - 0.5 * np.sum((x - params.means[c]) ** 2 / var, axis=1))
    shift = logp.max(axis=1, keepdims=True)
    p = np.exp(logp - shift)
    p /= p.sum(axis=1, keepdims=True)
    return p[:, 1]
