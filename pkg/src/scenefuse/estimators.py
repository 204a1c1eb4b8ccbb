"""scikit-learn style wrappers around the two trainable branches.

Both estimators consume an (n_samples, D) feature matrix and expose the
usual surface: ``fit``, ``decision_function``, ``predict_proba``,
``get_params``/``set_params``, and ``clone`` compatibility. They delegate
the optimization to :mod:`scenefuse.training`, so a fitted estimator and a
directly trained head are interchangeable.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array

from .fusion import branch_probs
from .heads import branch_scores, project
from .training import TrainConfig, train_image_head, train_text_head
from .types import Category, CategoryVocabulary, EmbeddingVector, ImageRecord


def _train_config(est) -> TrainConfig:
    return TrainConfig(
        learning_rate=est.learning_rate,
        beta1=est.beta1,
        beta2=est.beta2,
        epsilon=est.epsilon,
        weight_decay=est.weight_decay,
        batch_size=est.batch_size,
        iterations=est.iterations,
        seed=est.seed,
        loss_reduction=est.loss_reduction,
    )


def _records_from_matrix(features: np.ndarray, labels=None, teachers=None) -> list[ImageRecord]:
    records = []
    for i in range(features.shape[0]):
        records.append(
            ImageRecord(
                image_id=f"row_{i}",
                global_feature=EmbeddingVector(features[i]),
                teacher_embedding=(
                    EmbeddingVector(teachers[i]) if teachers is not None else None
                ),
                labels=frozenset(labels[i]) if labels is not None else frozenset(),
            )
        )
    return records


def _label_sets(y, n_categories: int) -> list[set[int]]:
    """Accept a multilabel indicator matrix or a sequence of id collections."""
    arr = np.asarray(y, dtype=object)
    if arr.ndim == 2:
        ind = np.asarray(y)
        if ind.shape[1] != n_categories:
            raise ValueError(
                f"indicator matrix has {ind.shape[1]} columns, expected {n_categories}"
            )
        return [set(np.flatnonzero(row)) for row in ind]
    return [set(int(c) for c in row) for row in y]


class TextMlrScorer(TransformerMixin, BaseEstimator):
    """Multi-label scorer that aligns global features with text embeddings.

    Training ranks every labelled (positive) category above every unlabelled
    one via a pairwise hinge. When a vocabulary is given, only its base
    split participates in training and novel labels are rejected; at scoring
    time all categories are ranked.
    """

    def __init__(
        self,
        text_embeddings=None,
        vocabulary: CategoryVocabulary | None = None,
        learning_rate: float = 2e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
        weight_decay: float = 1e-4,
        batch_size: int = 64,
        iterations: int = 500,
        seed: int = 0,
        loss_reduction: str = "mean_pairs",
    ) -> None:
        self.text_embeddings = text_embeddings
        self.vocabulary = vocabulary
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.iterations = iterations
        self.seed = seed
        self.loss_reduction = loss_reduction

    def _vocab(self) -> CategoryVocabulary:
        if self.vocabulary is not None:
            return self.vocabulary
        n = np.asarray(self.text_embeddings).shape[0]
        return CategoryVocabulary(
            [Category(id=i, name=f"cat_{i:03d}", split="base") for i in range(n)]
        )

    def fit(self, X, y):
        if self.text_embeddings is None:
            raise ValueError("text_embeddings must be provided before fitting")
        features = check_array(X, dtype=np.float64)
        vocab = self._vocab()
        labels = _label_sets(y, vocab.size)
        if len(labels) != features.shape[0]:
            raise ValueError("X and y have different numbers of samples")
        history: list[float] = []
        self.head_ = train_text_head(
            _records_from_matrix(features, labels=labels),
            np.asarray(self.text_embeddings, dtype=np.float64),
            _train_config(self),
            vocab=vocab,
            loss_history=history,
        )
        self.loss_history_ = history
        self.n_features_in_ = features.shape[1]
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "head_"):
            raise NotFittedError("call fit before using this estimator")

    def decision_function(self, X) -> np.ndarray:
        """Raw cosine scores against every category row, shape (n, C)."""
        self._check_fitted()
        features = check_array(X, dtype=np.float64)
        table = np.asarray(self.text_embeddings, dtype=np.float64)
        return np.stack([branch_scores(self.head_, row, table) for row in features])

    def predict_proba(self, X) -> np.ndarray:
        """Calibrated per-category probabilities (z-score then sigmoid, per row)."""
        return np.stack([branch_probs(row) for row in self.decision_function(X)])

    def transform(self, X) -> np.ndarray:
        """Projected embeddings in the shared space, shape (n, d)."""
        self._check_fitted()
        features = check_array(X, dtype=np.float64)
        return np.stack([project(self.head_, row).values for row in features])


class VisualMlrScorer(TransformerMixin, BaseEstimator):
    """Distillation branch: regresses teacher embeddings with an L1 loss.

    ``fit(X, Y)`` takes teacher embeddings as the regression target.
    Scoring needs ``text_embeddings`` to rank categories for new images.
    """

    def __init__(
        self,
        text_embeddings=None,
        learning_rate: float = 2e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
        weight_decay: float = 1e-4,
        batch_size: int = 64,
        iterations: int = 500,
        seed: int = 0,
        loss_reduction: str = "mean_pairs",
    ) -> None:
        self.text_embeddings = text_embeddings
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.iterations = iterations
        self.seed = seed
        self.loss_reduction = loss_reduction

    def fit(self, X, Y):
        features = check_array(X, dtype=np.float64)
        teachers = check_array(Y, dtype=np.float64)
        if teachers.shape[0] != features.shape[0]:
            raise ValueError("X and Y have different numbers of samples")
        history: list[float] = []
        self.head_ = train_image_head(
            _records_from_matrix(features, teachers=teachers),
            _train_config(self),
            loss_history=history,
        )
        self.loss_history_ = history
        self.n_features_in_ = features.shape[1]
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "head_"):
            raise NotFittedError("call fit before using this estimator")

    def transform(self, X) -> np.ndarray:
        """Distilled embeddings in the teacher space, shape (n, d)."""
        self._check_fitted()
        features = check_array(X, dtype=np.float64)
        return np.stack([project(self.head_, row).values for row in features])

    def decision_function(self, X) -> np.ndarray:
        self._check_fitted()
        if self.text_embeddings is None:
            raise ValueError("text_embeddings must be set to score categories")
        features = check_array(X, dtype=np.float64)
        table = np.asarray(self.text_embeddings, dtype=np.float64)
        return np.stack([branch_scores(self.head_, row, table) for row in features])

    def predict_proba(self, X) -> np.ndarray:
        return np.stack([branch_probs(row) for row in self.decision_function(X)])
