import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import Pipeline

from entmatch.baselines import (extract_features, feature_names, predict_gnb,
                                predict_logreg, train_gnb, train_logreg)
from entmatch.data import ConfigError, RecordPair
from entmatch.estimators import (DeepERMatcher, GaussianNBMatcher,
                                 LogisticMatcher, PairFeaturizer)
from entmatch.text import EmbeddingStore

from test_baselines import toy_separable
from test_training import separable_pairs


def feature_pairs(n=30, seed=3):
    """Labeled pairs whose titles either coincide or share nothing."""
    return separable_pairs(n, seed=seed)


SCHEMA = ["title", "year"]


class TestPairFeaturizer:
    def test_infers_sorted_schema(self):
        pairs = feature_pairs(6)
        ft = PairFeaturizer().fit(pairs)
        assert ft.schema_ == ["title", "year"]

    def test_explicit_schema_kept(self):
        ft = PairFeaturizer(schema=["year"]).fit(feature_pairs(6))
        assert ft.schema_ == ["year"]
        assert ft.transform(feature_pairs(6)).shape == (6, 6)

    def test_transform_matches_direct_extraction(self):
        pairs = feature_pairs(10)
        ft = PairFeaturizer(schema=SCHEMA).fit(pairs)
        np.testing.assert_array_equal(ft.transform(pairs),
                                      extract_features(pairs, SCHEMA))

    def test_feature_names_out(self):
        ft = PairFeaturizer(schema=SCHEMA).fit(feature_pairs(5))
        assert list(ft.get_feature_names_out()) == feature_names(SCHEMA)

    def test_unfitted_transform_raises(self):
        with pytest.raises(NotFittedError):
            PairFeaturizer().transform(feature_pairs(3))

    def test_rejects_non_pairs(self):
        with pytest.raises(ConfigError, match="RecordPair"):
            PairFeaturizer().fit([{"title": "x"}])
        with pytest.raises(ConfigError, match="at least one"):
            PairFeaturizer().fit([])

    def test_clone_round_trip(self):
        ft = PairFeaturizer(schema=["title"], q=2)
        twin = clone(ft)
        assert twin.get_params() == {"schema": ["title"], "q": 2}
        assert not hasattr(twin, "schema_")


class TestLogisticMatcher:
    def test_separates_fixture(self):
        feats, labels = toy_separable()
        clf = LogisticMatcher().fit(feats, labels)
        assert clf.score(feats, labels) == 1.0

    def test_matches_plain_training_function(self):
        feats, labels = toy_separable()
        clf = LogisticMatcher(learning_rate=0.1, epochs=50)
        clf.fit(feats, labels)
        ref = train_logreg(feats, labels, lr=0.1, epochs=50)
        np.testing.assert_array_equal(clf.params_.weights, ref.weights)
        np.testing.assert_array_equal(clf.predict_proba(feats)[:, 1],
                                      predict_logreg(ref, feats))

    def test_proba_rows_sum_to_one(self):
        feats, labels = toy_separable()
        proba = LogisticMatcher().fit(feats, labels).predict_proba(feats)
        assert proba.shape == (len(labels), 2)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)

    def test_unfitted_raises(self):
        with pytest.raises(NotFittedError):
            LogisticMatcher().predict(np.zeros((1, 2)))

    def test_label_validation(self):
        feats, _ = toy_separable()
        with pytest.raises(ConfigError, match="0 or 1"):
            LogisticMatcher().fit(feats, np.full(len(feats), 2))
        with pytest.raises(ConfigError, match="labels"):
            LogisticMatcher().fit(feats, np.zeros(3))

    def test_feature_width_checked_at_predict(self):
        feats, labels = toy_separable()
        clf = LogisticMatcher().fit(feats, labels)
        with pytest.raises(ConfigError, match="features"):
            clf.predict(np.zeros((2, feats.shape[1] + 1)))


class TestGaussianNBMatcher:
    FEATS = np.array([[0.0, 2.0], [2.0, 4.0], [10.0, 0.0], [14.0, 2.0]])
    LABELS = np.array([0, 0, 1, 1])

    def test_matches_plain_training_function(self):
        clf = GaussianNBMatcher().fit(self.FEATS, self.LABELS)
        ref = train_gnb(self.FEATS, self.LABELS)
        np.testing.assert_array_equal(clf.params_.means, ref.means)
        np.testing.assert_array_equal(clf.predict_proba(self.FEATS)[:, 1],
                                      predict_gnb(ref, self.FEATS))

    def test_classifies_fixture(self):
        clf = GaussianNBMatcher().fit(self.FEATS, self.LABELS)
        np.testing.assert_array_equal(clf.predict(self.FEATS), self.LABELS)

    def test_single_class_rejected(self):
        with pytest.raises(ConfigError):
            GaussianNBMatcher().fit(self.FEATS, np.zeros(4, dtype=int))


class TestPipelineComposition:
    def test_featurizer_feeds_classifier(self):
        pairs = feature_pairs(30)
        y = np.array([p.label for p in pairs])
        pipe = Pipeline([("features", PairFeaturizer()),
                         ("clf", LogisticMatcher(epochs=300))])
        pipe.fit(pairs, y)
        assert pipe.score(pairs, y) == 1.0
        assert pipe.predict(pairs[:2]).shape == (2,)

    def test_pipeline_clonable(self):
        pipe = Pipeline([("features", PairFeaturizer(q=2)),
                         ("clf", GaussianNBMatcher())])
        assert clone(pipe).get_params()["features__q"] == 2


class TestDeepERMatcher:
    def make(self, **over):
        kwargs = dict(embeddings=EmbeddingStore.hash_only(8, init_scale=1.0),
                      hidden_size=4, epochs=6, batch_size=8, seed=1)
        kwargs.update(over)
        return DeepERMatcher(**kwargs)

    def test_fits_and_separates(self):
        pairs = feature_pairs(40)
        clf = self.make().fit(pairs)
        assert clf.score(pairs, [p.label for p in pairs]) == 1.0
        assert clf.model_.config.embedding_dim == 8

    def test_labels_from_y_override_pairs(self):
        # pairs carry mixed labels, y is all-ones: the single-class warning
        # can only fire if y was the label source
        pairs = feature_pairs(20)
        with pytest.warns(UserWarning, match="single-class"):
            clf = self.make(epochs=1).fit(pairs, np.ones(len(pairs), dtype=int))
        assert clf.classes_.tolist() == [0, 1]

    def test_unlabeled_without_y_rejected(self):
        pairs = [RecordPair("a", "b", {"title": "x"}, {"title": "x"})]
        with pytest.raises(ConfigError, match="unlabeled"):
            self.make().fit(pairs * 5)

    def test_proba_shape_and_sum(self):
        pairs = feature_pairs(20)
        clf = self.make(epochs=2).fit(pairs)
        proba = clf.predict_proba(pairs[:7])
        assert proba.shape == (7, 2)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)

    def test_deterministic(self):
        pairs = feature_pairs(24)
        p1 = self.make(epochs=3).fit(pairs).predict_proba(pairs)[:, 1]
        p2 = self.make(epochs=3).fit(pairs).predict_proba(pairs)[:, 1]
        np.testing.assert_array_equal(p1, p2)

    def test_dev_fraction_validated(self):
        with pytest.raises(ConfigError, match="dev_fraction"):
            self.make(dev_fraction=1.5).fit(feature_pairs(10))

    def test_too_few_pairs_for_split(self):
        with pytest.raises(ConfigError, match="dev"):
            self.make().fit(feature_pairs(2)[:1])

    def test_unfitted_raises(self):
        with pytest.raises(NotFittedError):
            self.make().predict(feature_pairs(2))

    def test_get_params_round_trip(self):
        clf = self.make(epochs=9)
        params = clf.get_params()
        assert params["epochs"] == 9 and params["hidden_size"] == 4
        twin = clone(clf)
        assert twin.get_params()["epochs"] == 9
        assert not hasattr(twin, "model_")
