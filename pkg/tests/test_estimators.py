import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import separable_dataset
from scenefuse import TextMlrScorer, VisualMlrScorer
from scenefuse.rng import SplitMix64


def toy_problem(seed=0, n=40, n_categories=6, d=8, big_d=12):
    rng = SplitMix64(seed)
    table = rng.normal_vector(n_categories * d).reshape(n_categories, d)
    features = rng.normal_vector(n * big_d).reshape(n, big_d)
    indicator = np.zeros((n, n_categories), dtype=int)
    for i in range(n):
        count = 1 + rng.randint(n_categories - 1)
        indicator[i, rng.permutation(n_categories)[:count]] = 1
    return table, features, indicator


class TestTextMlrScorer:
    def test_get_set_params_and_clone(self):
        est = TextMlrScorer(iterations=7, seed=3)
        assert est.get_params()["iterations"] == 7
        cloned = clone(est)
        assert cloned.get_params()["seed"] == 3

    def test_fit_predict_shapes(self):
        table, features, indicator = toy_problem()
        est = TextMlrScorer(text_embeddings=table, iterations=30).fit(features, indicator)
        scores = est.decision_function(features)
        probs = est.predict_proba(features)
        assert scores.shape == (40, 6)
        assert probs.shape == (40, 6)
        assert np.all((probs > 0) & (probs < 1))

    def test_predict_proba_rows_calibrated(self):
        table, features, indicator = toy_problem()
        est = TextMlrScorer(text_embeddings=table, iterations=10).fit(features, indicator)
        raw = est.decision_function(features)
        for row in raw:
            centered = (row - row.mean()) / np.sqrt(np.mean((row - row.mean()) ** 2))
            assert abs(centered.mean()) < 1e-9

    def test_label_sets_accepted(self):
        table, features, _ = toy_problem()
        labels = [[0], [1, 2], [3], [4, 5]] * 10
        est = TextMlrScorer(text_embeddings=table, iterations=5).fit(features, labels)
        assert hasattr(est, "head_")

    def test_unfitted_raises(self):
        est = TextMlrScorer(text_embeddings=np.eye(3))
        with pytest.raises(NotFittedError):
            est.decision_function(np.zeros((1, 3)))

    def test_missing_table_raises(self):
        with pytest.raises(ValueError):
            TextMlrScorer().fit(np.zeros((2, 3)), [[0], [0]])

    def test_deterministic_fit(self):
        table, features, indicator = toy_problem()
        a = TextMlrScorer(text_embeddings=table, iterations=25, seed=5).fit(features, indicator)
        b = TextMlrScorer(text_embeddings=table, iterations=25, seed=5).fit(features, indicator)
        assert a.head_.weight.tobytes() == b.head_.weight.tobytes()

    def test_vocabulary_restricts_training(self):
        vocab, protos, records = separable_dataset(
            n_base=4, n_novel=2, embed_dim=8, global_dim=8, n_images=30, seed=2
        )
        features = np.stack([r.global_feature.values for r in records])
        indicator = np.zeros((len(records), vocab.size), dtype=int)
        for i, record in enumerate(records):
            for cid in record.labels:
                indicator[i, cid] = 1
        est = TextMlrScorer(
            text_embeddings=protos, vocabulary=vocab, iterations=20
        ).fit(features, indicator)
        assert est.decision_function(features).shape == (30, vocab.size)


class TestVisualMlrScorer:
    def test_transform_shape(self):
        table, features, _ = toy_problem()
        rng = SplitMix64(9)
        teachers = rng.normal_vector(40 * 8).reshape(40, 8)
        est = VisualMlrScorer(text_embeddings=table, iterations=20).fit(features, teachers)
        assert est.transform(features).shape == (40, 8)
        assert est.decision_function(features).shape == (40, 6)

    def test_deterministic_fit(self):
        table, features, _ = toy_problem()
        rng = SplitMix64(9)
        teachers = rng.normal_vector(40 * 8).reshape(40, 8)
        a = VisualMlrScorer(iterations=15, seed=1).fit(features, teachers)
        b = VisualMlrScorer(iterations=15, seed=1).fit(features, teachers)
        assert a.head_.weight.tobytes() == b.head_.weight.tobytes()

    def test_scoring_requires_table(self):
        _, features, _ = toy_problem()
        rng = SplitMix64(9)
        teachers = rng.normal_vector(40 * 8).reshape(40, 8)
        est = VisualMlrScorer(iterations=5).fit(features, teachers)
        with pytest.raises(ValueError):
            est.decision_function(features)

    def test_clone_compatible(self):
        est = VisualMlrScorer(iterations=3, weight_decay=0.5)
        assert clone(est).get_params()["weight_decay"] == 0.5
