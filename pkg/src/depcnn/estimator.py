"""Scikit-learn style wrappers so the model composes with sklearn pipelines.

``PairEncoder`` is the transform step (candidate pairs -> encoded two-channel
dataset); ``DepCnnClassifier`` is the classifier (fit / predict /
predict_proba over encoded instances).  Both expose their settings through
``get_params``/``set_params`` and therefore work with ``clone``,
``Pipeline`` and the rest of the ecosystem.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from .corpus import LABEL_OTHER, LABEL_PPI
from .features import (
    EmbeddingTable,
    EncodedDataset,
    FeatureSchema,
    encode_dataset,
)
from .harness import TrainConfig, predict_all, train
from .network import PPI_INDEX, ModelConfig


class PairEncoder(BaseEstimator, TransformerMixin):
    """Encode candidate pairs into the two-channel numeric representation.

    ``fit`` freezes the feature schema: the dependency-label vocabulary is
    collected from the training sentences (unless an explicit schema is
    given) and the embedding table is resolved once.  ``transform`` then maps
    lists of candidate-pair instances to an :class:`EncodedDataset`.
    """

    def __init__(
        self,
        embeddings=None,
        embedding_dim: int = 200,
        max_len: int = 160,
        seed: int = 0,
        schema: FeatureSchema | None = None,
        precision: str = "f64",
        index_words: bool = True,
    ):
        self.embeddings = embeddings
        self.embedding_dim = embedding_dim
        self.max_len = max_len
        self.seed = seed
        self.schema = schema
        self.precision = precision
        self.index_words = index_words

    def _resolve_table(self) -> EmbeddingTable:
        if isinstance(self.embeddings, EmbeddingTable):
            return self.embeddings
        if self.embeddings is None:
            return EmbeddingTable.random(self.embedding_dim, seed=self.seed)
        return EmbeddingTable.load(self.embeddings, dim=self.embedding_dim, seed=self.seed)

    def fit(self, X, y=None):
        sentences = {inst.sentence.key: inst.sentence for inst in X}
        self.schema_ = self.schema or FeatureSchema.from_sentences(sentences.values())
        self.table_ = self._resolve_table()
        return self

    def transform(self, X) -> EncodedDataset:
        if not hasattr(self, "schema_"):
            raise NotFittedError("PairEncoder.fit must run before transform")
        return encode_dataset(
            X,
            self.table_,
            self.schema_,
            max_len=self.max_len,
            dtype=self.precision,
            with_ids=self.index_words,
        )


class DepCnnClassifier(BaseEstimator, ClassifierMixin):
    """Multichannel dependency-aware CNN classifier over encoded pairs.

    ``X`` is an :class:`EncodedDataset` or a list of encoded instances; the
    optional ``y`` overrides the labels stored on the instances (strings
    ``"PPI"``/``"OTHER"`` or 0/1 with 1 = PPI).
    """

    def __init__(
        self,
        windows=(3,),
        filters_per_window: int = 400,
        max_len: int = 160,
        keep_prob: float = 0.5,
        channels: int = 2,
        train_embeddings: bool = False,
        epochs: int = 250,
        batch_size: int = 128,
        learning_rate: float = 0.0007,
        seed: int = 0,
        shuffle_seed: int | None = None,
        dropout_seed: int | None = None,
        precision: str = "f64",
    ):
        self.windows = windows
        self.filters_per_window = filters_per_window
        self.max_len = max_len
        self.keep_prob = keep_prob
        self.channels = channels
        self.train_embeddings = train_embeddings
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed
        self.shuffle_seed = shuffle_seed
        self.dropout_seed = dropout_seed
        self.precision = precision

    @staticmethod
    def _as_label(value) -> str:
        if isinstance(value, str):
            if value not in (LABEL_PPI, LABEL_OTHER):
                raise ValueError(f"unknown label {value!r}")
            return value
        return LABEL_PPI if int(value) == 1 else LABEL_OTHER

    def _instances(self, X, y=None):
        instances = list(X.instances) if isinstance(X, EncodedDataset) else list(X)
        if y is not None:
            if len(y) != len(instances):
                raise ValueError(f"{len(y)} labels for {len(instances)} instances")
            instances = [
                replace(inst, label=self._as_label(label))
                for inst, label in zip(instances, y)
            ]
        return instances

    def fit(self, X, y=None):
        instances = self._instances(X, y)
        if not instances:
            raise ValueError("cannot fit on an empty dataset")
        d = instances[0].channel1.shape[1]
        max_len = instances[0].channel1.shape[0]
        emb_dim = getattr(X, "emb_dim", d)
        self.model_config_ = ModelConfig(
            windows=tuple(self.windows),
            filters_per_window=self.filters_per_window,
            max_len=max_len,
            keep_prob=self.keep_prob,
            channels=self.channels,
            d=d,
            emb_dim=emb_dim,
            train_embeddings=self.train_embeddings,
            seed=self.seed,
            precision=self.precision,
        )
        self.train_config_ = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            shuffle_seed=self.seed + 1 if self.shuffle_seed is None else self.shuffle_seed,
            dropout_seed=self.seed + 2 if self.dropout_seed is None else self.dropout_seed,
        )
        embedding = getattr(X, "embedding_matrix", None)
        result = train(
            instances, self.model_config_, self.train_config_, embedding=embedding
        )
        self.params_ = result.params
        self.losses_ = result.losses
        self.classes_ = np.array([LABEL_OTHER, LABEL_PPI])
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("DepCnnClassifier.fit must run before prediction")

    def predict(self, X) -> np.ndarray:
        self._check_fitted()
        rows = predict_all(self._instances(X), self.params_, self.model_config_)
        return np.array([row.predicted for row in rows])

    def predict_proba(self, X) -> np.ndarray:
        """Column order follows ``classes_``: [p(OTHER), p(PPI)]."""
        self._check_fitted()
        rows = predict_all(self._instances(X), self.params_, self.model_config_)
        p_ppi = np.array([row.p_ppi for row in rows])
        return np.column_stack([1.0 - p_ppi, p_ppi])

    def score(self, X, y=None) -> float:
        """Accuracy against ``y`` or the labels stored on the instances."""
        instances = self._instances(X, y)
        predictions = self.predict(instances)
        golds = np.array([inst.label for inst in instances])
        return float(np.mean(predictions == golds))

    @property
    def p_ppi_index(self) -> int:
        return PPI_INDEX
