"""On-disk dataset, head, and score layouts.

A dataset directory is self-contained:

    vocab.json               category table
    text_embeddings.sict     C x d category embedding rows
    images.jsonl             {image_id, labels[], global_row, teacher_row}
    global_features.sict     N x D
    teacher_embeddings.sict  N x d (row per image with a teacher)
    detections.jsonl         {image_id, instances[{box[4], scores[[cid, p]]}]}
    groundtruth.jsonl        {image_id, objects[{box[4], category_id}]}

Heads and score tables get their own directories (see ``save_head`` and
``save_scores``). JSON is written with sorted keys and no timestamps, so
every writer is byte-deterministic; tensors are stored as 32-bit floats.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DatasetValidationError
from .heads import MlrHead
from .tensorfile import read_tensor, write_tensor
from .training import TrainConfig
from .types import (
    CategoryVocabulary,
    DetectionInstance,
    DetectionSet,
    EmbeddingVector,
    FusionConfig,
    GroundTruthObject,
    GroundTruthSet,
    ImageRecord,
    MlrScores,
)


def _dump_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _dump_jsonl(path: Path, rows) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _load_jsonl(path: Path) -> list[dict]:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DatasetValidationError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
    return rows


@dataclass(frozen=True)
class Dataset:
    vocab: CategoryVocabulary
    records: tuple[ImageRecord, ...]
    detections: tuple[DetectionSet, ...]
    ground_truths: tuple[GroundTruthSet, ...]
    text_embeds: np.ndarray


def save_dataset(
    out_dir: str | Path,
    *,
    vocab: CategoryVocabulary,
    records: Sequence[ImageRecord],
    detections: Sequence[DetectionSet],
    ground_truths: Sequence[GroundTruthSet],
    text_embeds,
) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(out / "vocab.json", vocab.to_dict())
    write_tensor(out / "text_embeddings.sict", np.asarray(text_embeds))

    image_rows = []
    teacher_rows = []
    for row, record in enumerate(records):
        record.validate_labels(vocab)
        teacher_row = None
        if record.teacher_embedding is not None:
            teacher_row = len(teacher_rows)
            teacher_rows.append(record.teacher_embedding.values)
        image_rows.append(
            {
                "image_id": record.image_id,
                "labels": sorted(record.labels),
                "global_row": row,
                "teacher_row": teacher_row,
                "width": record.width,
                "height": record.height,
            }
        )
    _dump_jsonl(out / "images.jsonl", image_rows)
    write_tensor(
        out / "global_features.sict",
        np.stack([r.global_feature.values for r in records]),
    )
    if teacher_rows:
        write_tensor(out / "teacher_embeddings.sict", np.stack(teacher_rows))

    save_detections(out / "detections.jsonl", detections)
    _dump_jsonl(
        out / "groundtruth.jsonl",
        (
            {
                "image_id": gt.image_id,
                "objects": [
                    {"box": list(obj.box), "category_id": obj.category_id}
                    for obj in gt.objects
                ],
            }
            for gt in ground_truths
        ),
    )
    return out


def save_detections(path: str | Path, detections: Sequence[DetectionSet]) -> None:
    _dump_jsonl(
        Path(path),
        (
            {
                "image_id": det.image_id,
                "instances": [
                    {
                        "box": list(inst.box),
                        "scores": [[cid, p] for cid, p in inst.scores],
                    }
                    for inst in det.instances
                ],
            }
            for det in detections
        ),
    )


def load_detections(path: str | Path, vocab: CategoryVocabulary | None = None) -> tuple[DetectionSet, ...]:
    sets = []
    for row in _load_jsonl(Path(path)):
        try:
            instances = tuple(
                DetectionInstance(
                    box=tuple(inst["box"]),
                    scores=tuple((int(c), float(p)) for c, p in inst["scores"]),
                )
                for inst in row["instances"]
            )
            det = DetectionSet(image_id=str(row["image_id"]), instances=instances)
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetValidationError(f"{path}: malformed detection row: {exc}") from exc
        if vocab is not None:
            det.validate_categories(vocab)
        sets.append(det)
    return tuple(sets)


def load_dataset(data_dir: str | Path) -> Dataset:
    root = Path(data_dir)
    try:
        vocab = CategoryVocabulary.from_dict(json.loads((root / "vocab.json").read_text()))
    except FileNotFoundError as exc:
        raise DatasetValidationError(f"{root}: missing vocab.json") from exc
    except json.JSONDecodeError as exc:
        raise DatasetValidationError(f"{root}/vocab.json: invalid JSON: {exc}") from exc

    text_embeds = read_tensor(root / "text_embeddings.sict").astype(np.float64)
    if text_embeds.ndim != 2 or text_embeds.shape[0] != vocab.size:
        raise DatasetValidationError(
            f"{root}: text embedding table shape {text_embeds.shape} "
            f"does not match vocabulary size {vocab.size}"
        )

    global_features = read_tensor(root / "global_features.sict").astype(np.float64)
    teacher_path = root / "teacher_embeddings.sict"
    teachers = (
        read_tensor(teacher_path).astype(np.float64) if teacher_path.exists() else None
    )

    records = []
    for row in _load_jsonl(root / "images.jsonl"):
        try:
            image_id = str(row["image_id"])
            labels = frozenset(int(c) for c in row["labels"])
            global_row = int(row["global_row"])
            teacher_row = row.get("teacher_row")
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetValidationError(f"{root}: malformed image row: {exc}") from exc
        if not 0 <= global_row < global_features.shape[0]:
            raise DatasetValidationError(
                f"{root}: global_row {global_row} outside tensor with "
                f"{global_features.shape[0]} rows"
            )
        teacher = None
        if teacher_row is not None:
            if teachers is None or not 0 <= int(teacher_row) < teachers.shape[0]:
                raise DatasetValidationError(
                    f"{root}: teacher_row {teacher_row} has no backing tensor row"
                )
            teacher = EmbeddingVector(teachers[int(teacher_row)])
        record = ImageRecord(
            image_id=image_id,
            global_feature=EmbeddingVector(global_features[global_row]),
            teacher_embedding=teacher,
            labels=labels,
            width=row.get("width"),
            height=row.get("height"),
        )
        record.validate_labels(vocab)
        records.append(record)

    detections = load_detections(root / "detections.jsonl", vocab)

    ground_truths = []
    for row in _load_jsonl(root / "groundtruth.jsonl"):
        try:
            objects = tuple(
                GroundTruthObject(box=tuple(obj["box"]), category_id=int(obj["category_id"]))
                for obj in row["objects"]
            )
            gt = GroundTruthSet(image_id=str(row["image_id"]), objects=objects)
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetValidationError(f"{root}: malformed ground truth row: {exc}") from exc
        for obj in gt.objects:
            vocab.check_id(obj.category_id)
        ground_truths.append(gt)

    return Dataset(
        vocab=vocab,
        records=tuple(records),
        detections=detections,
        ground_truths=tuple(ground_truths),
        text_embeds=text_embeds,
    )


def quantize_head(head: MlrHead) -> MlrHead:
    """Round parameters to the 32-bit precision used by head files."""
    return MlrHead(
        weight=head.weight.astype(np.float32).astype(np.float64),
        bias=head.bias.astype(np.float32).astype(np.float64),
    )


def save_head(out_dir: str | Path, head: MlrHead, branch: str, config: TrainConfig) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_tensor(out / "weight.sict", head.weight)
    write_tensor(out / "bias.sict", head.bias)
    _dump_json(
        out / "head.json",
        {
            "branch": branch,
            "input_dim": head.input_dim,
            "output_dim": head.output_dim,
            "train_config": {
                "learning_rate": config.learning_rate,
                "beta1": config.beta1,
                "beta2": config.beta2,
                "epsilon": config.epsilon,
                "weight_decay": config.weight_decay,
                "batch_size": config.batch_size,
                "iterations": config.iterations,
                "seed": config.seed,
                "loss_reduction": config.loss_reduction,
            },
        },
    )
    return out


def load_head(head_dir: str | Path) -> tuple[MlrHead, dict]:
    root = Path(head_dir)
    try:
        meta = json.loads((root / "head.json").read_text())
    except FileNotFoundError as exc:
        raise DatasetValidationError(f"{root}: missing head.json") from exc
    weight = read_tensor(root / "weight.sict").astype(np.float64)
    bias = read_tensor(root / "bias.sict").astype(np.float64)
    head = MlrHead(weight=weight, bias=bias)
    if head.input_dim != meta.get("input_dim") or head.output_dim != meta.get("output_dim"):
        raise DatasetValidationError(f"{root}: head.json dims do not match tensors")
    return head, meta


def save_scores(
    out_dir: str | Path,
    scores: Sequence[MlrScores],
    cfg: FusionConfig,
) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _dump_jsonl(
        out / "scores.jsonl",
        ({"image_id": s.image_id, "row": i} for i, s in enumerate(scores)),
    )
    for field in ("raw_text", "raw_image", "prob_text", "prob_image", "prob_mmlr"):
        write_tensor(
            out / f"{field}.sict", np.stack([getattr(s, field) for s in scores])
        )
    _dump_json(
        out / "config.json",
        {
            "lambda_base": cfg.lambda_base,
            "lambda_novel": cfg.lambda_novel,
            "gamma": cfg.gamma,
            "temperature": cfg.temperature,
            "variant": cfg.variant,
            "prob_floor": cfg.prob_floor,
        },
    )
    return out


def load_scores(scores_dir: str | Path) -> tuple[tuple[MlrScores, ...], FusionConfig]:
    root = Path(scores_dir)
    cfg = FusionConfig(**json.loads((root / "config.json").read_text()))
    tensors = {
        field: read_tensor(root / f"{field}.sict").astype(np.float64)
        for field in ("raw_text", "raw_image", "prob_text", "prob_image", "prob_mmlr")
    }
    rows = _load_jsonl(root / "scores.jsonl")
    n = tensors["prob_mmlr"].shape[0]
    scores = []
    for row in rows:
        idx = int(row["row"])
        if not 0 <= idx < n:
            raise DatasetValidationError(f"{root}: score row {idx} outside tensor with {n} rows")
        scores.append(
            MlrScores(
                image_id=str(row["image_id"]),
                **{field: tensors[field][idx] for field in tensors},
            )
        )
    return tuple(scores), cfg
