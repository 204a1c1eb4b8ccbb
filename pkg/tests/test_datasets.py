import json

import numpy as np
import pytest

from scenefuse import (
    DatasetValidationError,
    FusionConfig,
    MlrHead,
    MlrScores,
    TrainConfig,
    WorldConfig,
    generate_dataset,
    generate_in_memory,
)
from scenefuse.datasets import (
    load_dataset,
    load_detections,
    load_head,
    load_scores,
    quantize_head,
    save_dataset,
    save_head,
    save_scores,
)

SMALL = WorldConfig(seed=3, images_train=25, images_test=10)


@pytest.fixture(scope="module")
def disk_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    generate_dataset(SMALL, out)
    return out


class TestDatasetRoundTrip:
    def test_records_survive(self, disk_dataset):
        memory = generate_in_memory(SMALL)
        loaded = load_dataset(disk_dataset / "train")
        assert loaded.vocab == memory.vocab
        assert len(loaded.records) == len(memory.train.records)
        for got, want in zip(loaded.records, memory.train.records):
            assert got.image_id == want.image_id
            assert got.labels == want.labels
            np.testing.assert_array_equal(got.global_feature.values, want.global_feature.values)
            np.testing.assert_array_equal(
                got.teacher_embedding.values, want.teacher_embedding.values
            )

    def test_detections_survive_exactly(self, disk_dataset):
        memory = generate_in_memory(SMALL)
        loaded = load_dataset(disk_dataset / "test")
        assert loaded.detections == memory.test.detections

    def test_ground_truth_survives_exactly(self, disk_dataset):
        memory = generate_in_memory(SMALL)
        loaded = load_dataset(disk_dataset / "test")
        assert loaded.ground_truths == memory.test.ground_truths

    def test_text_embeddings_survive(self, disk_dataset):
        memory = generate_in_memory(SMALL)
        loaded = load_dataset(disk_dataset / "train")
        np.testing.assert_array_equal(loaded.text_embeds, memory.world.prototypes)

    def test_rewrite_is_byte_identical(self, disk_dataset, tmp_path):
        loaded = load_dataset(disk_dataset / "train")
        save_dataset(
            tmp_path / "again",
            vocab=loaded.vocab,
            records=loaded.records,
            detections=loaded.detections,
            ground_truths=loaded.ground_truths,
            text_embeds=loaded.text_embeds,
        )
        for name in (
            "vocab.json",
            "images.jsonl",
            "detections.jsonl",
            "groundtruth.jsonl",
            "global_features.sict",
            "teacher_embeddings.sict",
            "text_embeddings.sict",
        ):
            assert (tmp_path / "again" / name).read_bytes() == (
                disk_dataset / "train" / name
            ).read_bytes(), name


class TestDatasetValidation:
    def test_missing_vocab(self, tmp_path):
        with pytest.raises(DatasetValidationError):
            load_dataset(tmp_path)

    def test_bad_row_index(self, disk_dataset, tmp_path):
        import shutil

        broken = tmp_path / "broken"
        shutil.copytree(disk_dataset / "train", broken)
        rows = [json.loads(l) for l in (broken / "images.jsonl").read_text().splitlines()]
        rows[0]["global_row"] = 999
        (broken / "images.jsonl").write_text(
            "\n".join(json.dumps(r, sort_keys=True) for r in rows) + "\n"
        )
        with pytest.raises(DatasetValidationError):
            load_dataset(broken)

    def test_bad_label_id(self, disk_dataset, tmp_path):
        import shutil

        broken = tmp_path / "broken2"
        shutil.copytree(disk_dataset / "train", broken)
        rows = [json.loads(l) for l in (broken / "images.jsonl").read_text().splitlines()]
        rows[0]["labels"] = [999]
        (broken / "images.jsonl").write_text(
            "\n".join(json.dumps(r, sort_keys=True) for r in rows) + "\n"
        )
        with pytest.raises(DatasetValidationError):
            load_dataset(broken)

    def test_malformed_jsonl(self, disk_dataset, tmp_path):
        import shutil

        broken = tmp_path / "broken3"
        shutil.copytree(disk_dataset / "train", broken)
        (broken / "detections.jsonl").write_text("{not json\n")
        with pytest.raises(DatasetValidationError):
            load_detections(broken / "detections.jsonl")


class TestHeadIo:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        head = MlrHead(weight=rng.normal(size=(4, 6)), bias=rng.normal(size=4))
        config = TrainConfig(iterations=12, seed=5)
        save_head(tmp_path / "head", head, "text", config)
        loaded, meta = load_head(tmp_path / "head")
        np.testing.assert_array_equal(loaded.weight, quantize_head(head).weight)
        assert meta["branch"] == "text"
        assert meta["train_config"]["iterations"] == 12

    def test_quantize_is_idempotent(self):
        rng = np.random.default_rng(1)
        head = MlrHead(weight=rng.normal(size=(3, 3)), bias=rng.normal(size=3))
        once = quantize_head(head)
        twice = quantize_head(once)
        np.testing.assert_array_equal(once.weight, twice.weight)

    def test_dims_mismatch_detected(self, tmp_path):
        head = MlrHead(weight=np.eye(2), bias=np.zeros(2))
        save_head(tmp_path / "head", head, "text", TrainConfig())
        meta = json.loads((tmp_path / "head" / "head.json").read_text())
        meta["input_dim"] = 99
        (tmp_path / "head" / "head.json").write_text(json.dumps(meta, sort_keys=True))
        with pytest.raises(DatasetValidationError):
            load_head(tmp_path / "head")


class TestScoresIo:
    def test_round_trip(self, tmp_path):
        cfg = FusionConfig()
        entries = [
            MlrScores(
                image_id=f"img_{i}",
                raw_text=np.linspace(-1, 1, 4),
                raw_image=np.linspace(1, -1, 4),
                prob_text=np.full(4, 0.5),
                prob_image=np.full(4, 0.25),
                prob_mmlr=np.full(4, 0.4),
            )
            for i in range(3)
        ]
        save_scores(tmp_path / "scores", entries, cfg)
        loaded, loaded_cfg = load_scores(tmp_path / "scores")
        assert loaded_cfg == cfg
        assert [s.image_id for s in loaded] == [s.image_id for s in entries]
        for got, want in zip(loaded, entries):
            np.testing.assert_allclose(got.prob_mmlr, want.prob_mmlr, atol=1e-7)
