"""The sklearn-facing estimator surface."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import Pipeline

from depcnn.estimator import DepCnnClassifier, PairEncoder
from depcnn.features import EncodedDataset


def _fast_classifier(**overrides):
    kwargs = dict(
        windows=(3,), filters_per_window=16, keep_prob=0.5,
        epochs=40, batch_size=128, seed=7,
    )
    kwargs.update(overrides)
    return DepCnnClassifier(**kwargs)


class TestPairEncoder:
    def test_fit_transform(self, toy_instances):
        encoder = PairEncoder(max_len=16, seed=5)
        dataset = encoder.fit_transform(toy_instances)
        assert isinstance(dataset, EncodedDataset)
        assert len(dataset) == len(toy_instances)
        assert dataset.d == 351
        assert dataset.embedding_matrix is not None

    def test_transform_before_fit(self, toy_instances):
        with pytest.raises(NotFittedError):
            PairEncoder().transform(toy_instances)

    def test_get_params_round_trip(self):
        encoder = PairEncoder(max_len=32, seed=9)
        params = encoder.get_params()
        assert params["max_len"] == 32
        rebuilt = PairEncoder(**params)
        assert rebuilt.get_params() == params

    def test_clone(self):
        encoder = PairEncoder(max_len=12)
        assert clone(encoder).get_params() == encoder.get_params()

    def test_schema_is_frozen_at_fit(self, toy_instances):
        encoder = PairEncoder(max_len=16, seed=5).fit(toy_instances)
        first = encoder.transform(toy_instances)
        second = encoder.transform(toy_instances[:3])
        assert first.schema_hash == second.schema_hash


class TestDepCnnClassifier:
    def test_fit_predict_labels(self, toy_dataset):
        clf = _fast_classifier().fit(toy_dataset)
        predictions = clf.predict(toy_dataset)
        assert set(predictions) <= {"PPI", "OTHER"}
        assert len(predictions) == len(toy_dataset)
        assert clf.score(toy_dataset) > 0.9  # training accuracy on the toy set

    def test_predict_before_fit(self, toy_dataset):
        with pytest.raises(NotFittedError):
            _fast_classifier().predict(toy_dataset)

    def test_predict_proba_columns(self, toy_dataset):
        clf = _fast_classifier(epochs=2).fit(toy_dataset)
        proba = clf.predict_proba(toy_dataset)
        assert proba.shape == (len(toy_dataset), 2)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)
        assert list(clf.classes_) == ["OTHER", "PPI"]
        hard = np.where(proba[:, 1] > proba[:, 0], "PPI", "OTHER")
        np.testing.assert_array_equal(hard, clf.predict(toy_dataset))

    def test_y_override_accepts_ints(self, toy_dataset):
        y = [1] * len(toy_dataset)
        clf = _fast_classifier(epochs=1).fit(toy_dataset, y)
        assert clf.score(toy_dataset, y) == pytest.approx(
            np.mean(clf.predict(toy_dataset) == "PPI")
        )

    def test_clone_and_params(self):
        clf = _fast_classifier(learning_rate=0.002)
        cloned = clone(clf)
        assert cloned.get_params()["learning_rate"] == 0.002
        assert cloned.get_params() == clf.get_params()

    def test_seed_materialization(self, toy_dataset):
        clf = _fast_classifier(epochs=1, seed=40).fit(toy_dataset)
        assert clf.train_config_.shuffle_seed == 41
        assert clf.train_config_.dropout_seed == 42
        explicit = _fast_classifier(epochs=1, seed=40, shuffle_seed=5).fit(toy_dataset)
        assert explicit.train_config_.shuffle_seed == 5


class TestPipeline:
    def test_encode_then_classify(self, toy_instances):
        pipeline = Pipeline(
            [
                ("encode", PairEncoder(max_len=16, seed=5)),
                ("cnn", _fast_classifier()),
            ]
        )
        pipeline.fit(toy_instances)
        predictions = pipeline.predict(toy_instances)
        golds = np.array([inst.label for inst in toy_instances])
        assert np.mean(predictions == golds) > 0.9
