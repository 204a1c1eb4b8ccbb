import numpy as np
import pytest

from conftest import make_record, separable_dataset
from scenefuse import (
    DatasetValidationError,
    EmbeddingVector,
    ImageRecord,
    MissingTeacherEmbeddingError,
    MlrHead,
    NovelLabelInTrainingError,
    OptimizerState,
    TrainConfig,
    adamw_step,
    branch_scores,
    dist_loss,
    finite_diff_check,
    initial_head,
    random_check_instance,
    train_image_head,
    train_text_head,
)
from scenefuse.rng import SplitMix64


def scalar_head(w: float, b: float = 0.0) -> MlrHead:
    return MlrHead(weight=np.array([[w]]), bias=np.array([b]))


class TestAdamwStep:
    def test_first_step_hand_computed(self):
        config = TrainConfig(learning_rate=0.1, weight_decay=0.0)
        head = scalar_head(1.0)
        state = OptimizerState.initial(head)
        grads = (np.array([[2.0]]), np.array([0.0]))
        new_head, new_state = adamw_step(head, state, grads, config)
        # m_hat = 2, v_hat = 4 on the first step -> update ~ lr * 2/2
        assert new_head.weight[0, 0] == pytest.approx(0.9, abs=1e-9)
        assert new_state.step_count == 1

    def test_decoupled_weight_decay(self):
        config = TrainConfig(learning_rate=0.1, weight_decay=0.01)
        head = scalar_head(1.0)
        new_head, _ = adamw_step(
            head, OptimizerState.initial(head), (np.array([[2.0]]), np.array([0.0])), config
        )
        assert new_head.weight[0, 0] == pytest.approx(0.899, abs=1e-9)

    def test_zero_gradient_no_decay_is_identity(self):
        config = TrainConfig(learning_rate=0.1, weight_decay=0.0)
        head = scalar_head(0.7, 0.3)
        new_head, state = adamw_step(
            head, OptimizerState.initial(head), (np.zeros((1, 1)), np.zeros(1)), config
        )
        assert new_head.weight[0, 0] == 0.7
        assert new_head.bias[0] == 0.3
        assert state.step_count == 1

    def test_nonzero_gradient_moves_parameters(self):
        rng = SplitMix64(11)
        config = TrainConfig()
        head = MlrHead(weight=rng.normal_vector(6).reshape(2, 3), bias=rng.normal_vector(2))
        grads = (rng.normal_vector(6).reshape(2, 3), rng.normal_vector(2))
        new_head, _ = adamw_step(head, OptimizerState.initial(head), grads, config)
        assert not (
            np.array_equal(new_head.weight, head.weight)
            and np.array_equal(new_head.bias, head.bias)
        )

    def test_state_shape_mismatch_rejected(self):
        from scenefuse import DimensionMismatchError

        head = scalar_head(1.0)
        other = MlrHead(weight=np.eye(2), bias=np.zeros(2))
        with pytest.raises(DimensionMismatchError):
            adamw_step(
                head,
                OptimizerState.initial(other),
                (np.zeros((1, 1)), np.zeros(1)),
                TrainConfig(),
            )


class TestTrainTextHead:
    def _toy(self, n=12):
        vocab, protos, records = separable_dataset(
            n_base=4, n_novel=1, embed_dim=8, global_dim=8, n_images=n, max_labels=2, seed=3
        )
        return vocab, protos, records

    def test_zero_iterations_returns_initial_head(self):
        vocab, protos, records = self._toy()
        config = TrainConfig(iterations=0, seed=9)
        head = train_text_head(records, protos, config, vocab=vocab)
        expected = initial_head(records[0].global_feature.dim, protos.shape[1], seed=9)
        np.testing.assert_array_equal(head.weight, expected.weight)
        np.testing.assert_array_equal(head.bias, expected.bias)

    def test_same_seed_bit_identical(self):
        vocab, protos, records = self._toy()
        config = TrainConfig(iterations=40, seed=4)
        head_a = train_text_head(records, protos, config, vocab=vocab)
        head_b = train_text_head(records, protos, config, vocab=vocab)
        assert head_a.weight.tobytes() == head_b.weight.tobytes()
        assert head_a.bias.tobytes() == head_b.bias.tobytes()

    def test_novel_label_rejected(self):
        vocab, protos, records = self._toy()
        poisoned = list(records)
        poisoned[0] = ImageRecord(
            image_id="bad",
            global_feature=records[0].global_feature,
            labels=frozenset({4}),  # novel id
        )
        with pytest.raises(NovelLabelInTrainingError):
            train_text_head(poisoned, protos, TrainConfig(iterations=1), vocab=vocab)

    def test_empty_dataset_rejected(self):
        vocab, protos, _ = self._toy()
        with pytest.raises(DatasetValidationError):
            train_text_head([], protos, TrainConfig(), vocab=vocab)

    def test_separable_world_top10_recall(self):
        vocab, protos, records = separable_dataset()
        config = TrainConfig(iterations=500, seed=0)
        head = train_text_head(records, protos, config, vocab=vocab)
        hits = total = 0
        for record in records:
            scores = branch_scores(head, record.global_feature, protos)
            top = sorted(vocab.base_ids, key=lambda c: (-scores[c], c))[:10]
            for cid in record.labels:
                total += 1
                hits += cid in top
        assert hits / total >= 0.99

    def test_orthogonal_world_top1_recall(self):
        vocab, protos, records = separable_dataset(
            n_base=10, n_novel=2, embed_dim=16, global_dim=32,
            n_images=120, max_labels=1, seed=1,
        )
        head = train_text_head(records, protos, TrainConfig(iterations=500, seed=1), vocab=vocab)
        for record in records:
            scores = branch_scores(head, record.global_feature, protos)
            best = max(vocab.base_ids, key=lambda c: scores[c])
            assert best in record.labels

    def test_loss_history_finite_and_decreasing(self):
        vocab, protos, records = separable_dataset(n_images=80, seed=2)
        history: list[float] = []
        train_text_head(
            records, protos, TrainConfig(iterations=200, seed=2), vocab=vocab,
            loss_history=history,
        )
        assert len(history) == 200
        assert all(np.isfinite(v) for v in history)
        assert np.mean(history[-20:]) < np.mean(history[:20])

    def test_default_world_default_config_loss_finite(self):
        from scenefuse import WorldConfig, generate_in_memory

        data = generate_in_memory(WorldConfig(seed=1))
        history: list[float] = []
        train_text_head(
            data.train.records, data.world.prototypes, TrainConfig(seed=1),
            vocab=data.vocab, loss_history=history,
        )
        assert len(history) == TrainConfig().iterations
        assert all(np.isfinite(v) for v in history)


class TestTrainImageHead:
    def _records(self, n=60, d=16, seed=5):
        rng = SplitMix64(seed)
        records = []
        for i in range(n):
            v = rng.normal_vector(d)
            records.append(
                ImageRecord(
                    image_id=f"r{i}",
                    global_feature=EmbeddingVector(v),
                    teacher_embedding=EmbeddingVector(v),
                )
            )
        return records

    def test_zero_iterations_returns_initial_head(self):
        records = self._records()
        head = train_image_head(records, TrainConfig(iterations=0, seed=7))
        expected = initial_head(16, 16, seed=7)
        np.testing.assert_array_equal(head.weight, expected.weight)

    def test_missing_teacher_rejected(self):
        records = [make_record(feature=(1.0, 2.0))]
        with pytest.raises(MissingTeacherEmbeddingError):
            train_image_head(records, TrainConfig(iterations=1))

    def test_realizable_target_converges(self):
        # teacher equals the feature itself, so an identity head is optimal
        d = 16
        records = self._records(n=150, d=d)
        config = TrainConfig(learning_rate=5e-3, iterations=500, seed=5)
        head = train_image_head(records, config)
        per_image = [
            dist_loss(head.weight @ r.global_feature.values + head.bias, r.teacher_embedding.values)
            for r in records
        ]
        assert np.mean(per_image) < 0.05 * d

    def test_same_seed_identical(self):
        records = self._records(n=40)
        config = TrainConfig(iterations=30, seed=8)
        head_a = train_image_head(records, config)
        head_b = train_image_head(records, config)
        assert head_a.weight.tobytes() == head_b.weight.tobytes()


class TestFiniteDiffCheck:
    def test_flat_region_reports_zero(self):
        # margins all satisfied: loss is identically zero around the head
        head = MlrHead(weight=np.eye(2) * 3.0, bias=np.zeros(2))
        table = np.array([[1.0, 0.0], [-1.0, 0.0]])
        err = finite_diff_check(
            head,
            np.array([[1.0, 0.0]]),
            loss_kind="rank",
            text_embeds=table,
            labels=[{0}],
            reduction="sum",
        )
        assert err < 1e-12

    def test_rank_random_batch(self):
        inst = random_check_instance(0)
        err = finite_diff_check(
            inst["head"], inst["features"], loss_kind="rank",
            text_embeds=inst["text_embeds"], labels=inst["labels"],
        )
        assert err < 1e-4

    def test_dist_random_batch(self):
        inst = random_check_instance(0)
        err = finite_diff_check(
            inst["head"], inst["features"], loss_kind="dist", teachers=inst["teachers"]
        )
        assert err < 1e-4
