"""Estimator wrappers with the scikit-learn fit/transform/predict surface.

These adapt the library's matchers to the conventions downstream tooling
expects: constructor args stored verbatim, fitted state in trailing-
underscore attributes, ``get_params``/``set_params``/``clone`` support,
and pipeline composability (``PairFeaturizer`` feeds the numeric
classifiers directly).  scikit-learn contributes only the base classes;
every algorithm underneath is this package's own.
"""

from __future__ import annotations

import random

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from .baselines import (extract_features, feature_names, predict_gnb,
                        predict_logreg, train_gnb, train_logreg)
from .data import ConfigError
from .model import DeepERModel, ModelConfig, encode_pairs
from .text import EmbeddingStore
from .training import TrainConfig, train_supervised
from .validation import (check_binary_labels, check_feature_matrix,
                         check_record_pairs, infer_schema, resolve_labels)


def _require_fitted(est, attr: str) -> None:
    if not hasattr(est, attr):
        raise NotFittedError(f"{type(est).__name__} is not fitted yet; "
                             "call fit first")


class PairFeaturizer(TransformerMixin, BaseEstimator):
    """Turns record pairs into the 6-similarities-per-attribute matrix."""

    def __init__(self, schema=None, q=3):
        self.schema = schema
        self.q = q

    def fit(self, X, y=None):
        pairs = check_record_pairs(X)
        self.schema_ = list(self.schema) if self.schema else infer_schema(pairs)
        self.n_features_in_ = len(self.schema_)
        return self

    def transform(self, X) -> np.ndarray:
        _require_fitted(self, "schema_")
        pairs = check_record_pairs(X)
        return extract_features(pairs, self.schema_, self.q)

    def get_feature_names_out(self, input_features=None) -> np.ndarray:
        _require_fitted(self, "schema_")
        return np.asarray(feature_names(self.schema_), dtype=object)


class LogisticMatcher(ClassifierMixin, BaseEstimator):
    """Binary logistic regression over feature matrices, trained by
    full-batch gradient descent."""

    def __init__(self, learning_rate=0.5, epochs=500):
        self.learning_rate = learning_rate
        self.epochs = epochs

    def fit(self, X, y):
        X = check_feature_matrix(X)
        y = check_binary_labels(y, X.shape[0])
        self.params_ = train_logreg(X, y, lr=self.learning_rate,
                                    epochs=self.epochs)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X) -> np.ndarray:
        _require_fitted(self, "params_")
        X = check_feature_matrix(X, self.n_features_in_)
        p = predict_logreg(self.params_, X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)


class GaussianNBMatcher(ClassifierMixin, BaseEstimator):
    """Gaussian naive Bayes over feature matrices."""

    def fit(self, X, y):
        X = check_feature_matrix(X)
        y = check_binary_labels(y, X.shape[0])
        self.params_ = train_gnb(X, y)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X) -> np.ndarray:
        _require_fitted(self, "params_")
        X = check_feature_matrix(X, self.n_features_in_)
        p = predict_gnb(self.params_, X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)


class DeepERMatcher(ClassifierMixin, BaseEstimator):
    """The recurrent matcher behind a fit/predict facade.

    ``X`` is a list of RecordPair objects; labels come from ``y`` or from
    the pairs.  fit carves a seeded dev fraction out of the input for
    model selection, so the estimator is self-contained.  ``embeddings``
    may be an EmbeddingStore, a path to a vector file, or None for the
    hashed-n-gram fallback.
    """

    def __init__(self, schema=None, embeddings=None, embedding_dim=300,
                 hidden_size=150, epochs=20, batch_size=16,
                 learning_rate=0.001, dev_fraction=0.2, threshold=0.5,
                 seed=1):
        self.schema = schema
        self.embeddings = embeddings
        self.embedding_dim = embedding_dim
        self.hidden_size = hidden_size
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.dev_fraction = dev_fraction
        self.threshold = threshold
        self.seed = seed

    def _store(self) -> EmbeddingStore:
        if isinstance(self.embeddings, EmbeddingStore):
            return self.embeddings
        if self.embeddings is None:
            return EmbeddingStore.hash_only(self.embedding_dim)
        return EmbeddingStore.load(self.embeddings)

    def fit(self, X, y=None):
        if not 0.0 < self.dev_fraction < 1.0:
            raise ConfigError(f"dev_fraction must lie in (0, 1), "
                              f"got {self.dev_fraction}")
        pairs = check_record_pairs(X)
        labels = resolve_labels(pairs, y)
        self.schema_ = list(self.schema) if self.schema else infer_schema(pairs)
        store = self._store()
        self.model_ = DeepERModel(
            self.schema_, store,
            ModelConfig(embedding_dim=store.dim, hidden_size=self.hidden_size,
                        seed=self.seed))
        encoded = encode_pairs(store, self.schema_, pairs, self.model_.tokenizer)
        encoded = [p.relabeled(int(l)) for p, l in zip(encoded, labels)]

        n_dev = max(1, int(len(encoded) * self.dev_fraction))
        if n_dev >= len(encoded):
            raise ConfigError(f"{len(encoded)} pairs leave no training data "
                              f"after the dev cut")
        order = list(range(len(encoded)))
        random.Random(self.seed).shuffle(order)
        dev = [encoded[i] for i in order[:n_dev]]
        train = [encoded[i] for i in order[n_dev:]]
        cfg = TrainConfig(batch_size=self.batch_size, epochs=self.epochs,
                          learning_rate=self.learning_rate,
                          threshold=self.threshold, seed=self.seed)
        self.checkpoint_ = train_supervised(self.model_, train, dev, cfg)
        self.classes_ = np.array([0, 1])
        return self

    def _encode(self, X) -> list:
        pairs = check_record_pairs(X)
        return encode_pairs(self.model_.store, self.schema_, pairs,
                            self.model_.tokenizer)

    def predict_proba(self, X) -> np.ndarray:
        _require_fitted(self, "model_")
        p = self.model_.predict_proba(self._encode(X),
                                      batch_size=self.batch_size)
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)[:, 1]
        return (proba >= self.threshold).astype(np.int64)
