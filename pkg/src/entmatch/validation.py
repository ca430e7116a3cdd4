"""Input validation shared by the estimator layer.

Estimators accept either lists of RecordPair objects or plain numeric
feature matrices; these helpers normalize both and fail early with
messages that name the offending input.
"""

from __future__ import annotations

import numpy as np

from .data import ConfigError, RecordPair


def check_record_pairs(X) -> list[RecordPair]:
    """Coerce ``X`` to a non-empty list of RecordPair objects."""
    pairs = list(X)
    if not pairs:
        raise ConfigError("expected at least one record pair, got none")
    for i, p in enumerate(pairs):
        if not isinstance(p, RecordPair):
            raise ConfigError(f"item {i} is {type(p).__name__}, not a RecordPair")
    return pairs


def infer_schema(pairs: list[RecordPair]) -> list[str]:
    """Sorted union of the attribute names seen on either side."""
    attrs: set[str] = set()
    for p in pairs:
        attrs.update(p.left)
        attrs.update(p.right)
    if not attrs:
        raise ConfigError("record pairs carry no attributes; cannot infer a schema")
    return sorted(attrs)


def resolve_labels(pairs: list[RecordPair], y) -> np.ndarray:
    """Labels from ``y`` when given, else from the pairs themselves."""
    if y is not None:
        labels = check_binary_labels(y, len(pairs))
    else:
        if any(p.label is None for p in pairs):
            raise ConfigError("pass y explicitly or label every pair; found an "
                              "unlabeled pair and no y")
        labels = np.array([p.label for p in pairs], dtype=np.int64)
        labels = check_binary_labels(labels, len(pairs))
    return labels


def check_binary_labels(y, n: int) -> np.ndarray:
    labels = np.asarray(y)
    if labels.shape != (n,):
        raise ConfigError(f"expected {n} labels, got shape {labels.shape}")
    if not np.isin(labels, (0, 1)).all():
        bad = labels[~np.isin(labels, (0, 1))][0]
        raise ConfigError(f"labels must be 0 or 1, found {bad!r}")
    return labels.astype(np.int64)


def check_feature_matrix(X, n_features: int | None = None) -> np.ndarray:
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2:
        raise ConfigError(f"expected a 2-d feature matrix, got ndim={arr.ndim}")
    if arr.shape[0] == 0:
        raise ConfigError("empty feature matrix")
    if not np.isfinite(arr).all():
        raise ConfigError("feature matrix contains NaN or Inf")
    if n_features is not None and arr.shape[1] != n_features:
        raise ConfigError(f"expected {n_features} features per row, "
                          f"got {arr.shape[1]}")
    return arr
