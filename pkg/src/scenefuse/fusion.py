"""Inference-time score pipeline.

Per image: raw cosine scores from both branches, per-branch calibration
(z-score then sigmoid), a split-dependent geometric ensemble of the two
branch probabilities, and finally a geometric-mean refinement of sparse
detector scores by the image-level probabilities.

Geometric means clamp both operands to ``[prob_floor, 1]`` before
exponentiation, so zero probabilities never produce NaNs, and are computed
with ``pow`` rather than exp/log so the endpoint weights (0 and 1) are
bit-exact identities.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import (
    DimensionMismatchError,
    InvalidConfigError,
    MissingHeadError,
    MissingTeacherEmbeddingError,
)
from .heads import MlrHead, branch_scores
from .mathops import row_normalize, stable_sigmoid, zscore_normalize
from .types import (
    CategoryVocabulary,
    DetectionInstance,
    DetectionSet,
    FusionConfig,
    ImageRecord,
    MlrScores,
)

PRESETS = {
    "lvis": dict(lambda_base=0.8, lambda_novel=0.8, gamma=0.5),
    "coco": dict(lambda_base=0.8, lambda_novel=0.5, gamma=0.7),
}


def preset(name: str, **overrides) -> FusionConfig:
    """Named hyperparameter presets: ``lvis`` and ``coco`` style."""
    if name not in PRESETS:
        raise InvalidConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    params = dict(PRESETS[name])
    params.update(overrides)
    return FusionConfig(**params)


def branch_probs(raw_scores) -> np.ndarray:
    """Calibrated branch probabilities: sigmoid of the z-scored raw scores."""
    return stable_sigmoid(zscore_normalize(raw_scores))


def image_branch_scores(
    record: ImageRecord,
    head: MlrHead | None,
    text_embeds,
    variant: str,
) -> np.ndarray:
    """Raw image-branch scores, from the learned head or the teacher embedding."""
    if variant == "visual_mlr":
        if head is None:
            raise MissingHeadError("visual_mlr variant needs a trained image head")
        return branch_scores(head, record.global_feature, text_embeds)
    if variant == "visual_mlr_plus":
        if record.teacher_embedding is None:
            raise MissingTeacherEmbeddingError(
                f"record {record.image_id!r} lacks the teacher embedding "
                "required by visual_mlr_plus"
            )
        teacher = record.teacher_embedding.values
        rows = np.asarray(text_embeds, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != teacher.shape[0]:
            raise DimensionMismatchError(
                f"teacher dim {teacher.shape[0]} does not match table shape {rows.shape}"
            )
        norm = float(np.linalg.norm(teacher))
        if norm == 0.0:
            raise MissingTeacherEmbeddingError("teacher embedding has zero norm")
        return np.clip(row_normalize(rows) @ (teacher / norm), -1.0, 1.0)
    raise InvalidConfigError(f"unknown variant {variant!r}")


def _clamp(p: np.ndarray, floor: float) -> np.ndarray:
    return np.clip(p, floor, 1.0)


def ensemble_mmlr(
    p_text,
    p_image,
    vocab: CategoryVocabulary,
    cfg: FusionConfig,
) -> np.ndarray:
    """Split-dependent geometric mean of the two branch probabilities.

    Base categories weight the text branch by ``lambda_base``; novel
    categories weight the image branch by ``lambda_novel``.
    """
    pt = np.asarray(p_text, dtype=np.float64)
    pi = np.asarray(p_image, dtype=np.float64)
    if pt.shape != pi.shape or pt.ndim != 1:
        raise DimensionMismatchError(f"probability shapes differ: {pt.shape} vs {pi.shape}")
    if pt.shape[0] != vocab.size:
        raise DimensionMismatchError(
            f"probability length {pt.shape[0]} does not match vocabulary size {vocab.size}"
        )
    text_weight = np.where(vocab.base_mask, cfg.lambda_base, 1.0 - cfg.lambda_novel)
    return np.power(_clamp(pt, cfg.prob_floor), text_weight) * np.power(
        _clamp(pi, cfg.prob_floor), 1.0 - text_weight
    )


def refine_detections(
    dets: DetectionSet, p_mmlr, gamma: float, *, prob_floor: float = 1e-12
) -> DetectionSet:
    """Blend image-level probabilities into each sparse detector score.

    Boxes and instance order are untouched; only the probability attached to
    each (category, score) pair changes. Categories the detector never
    proposed are not materialized.
    """
    if not 0.0 <= gamma <= 1.0:
        raise InvalidConfigError(f"gamma={gamma} outside [0, 1]")
    image_probs = np.asarray(p_mmlr, dtype=np.float64)
    if image_probs.ndim != 1:
        raise DimensionMismatchError("p_mmlr must be a vector")
    clamped_image = _clamp(image_probs, prob_floor)
    refined = []
    for inst in dets.instances:
        new_scores = []
        for cid, p in inst.scores:
            if not 0 <= cid < image_probs.shape[0]:
                raise DimensionMismatchError(
                    f"category id {cid} outside the {image_probs.shape[0]}-long score vector"
                )
            clamped_det = min(max(p, prob_floor), 1.0)
            new_scores.append(
                (cid, math.pow(clamped_image[cid], gamma) * math.pow(clamped_det, 1.0 - gamma))
            )
        refined.append(DetectionInstance(box=inst.box, scores=tuple(new_scores)))
    return DetectionSet(image_id=dets.image_id, instances=tuple(refined))


def score_image(
    record: ImageRecord,
    text_head: MlrHead,
    text_embeds,
    vocab: CategoryVocabulary,
    cfg: FusionConfig,
    *,
    image_head: MlrHead | None = None,
) -> MlrScores:
    """Full image-level scoring: both branches, calibration, and the ensemble."""
    raw_text = branch_scores(text_head, record.global_feature, text_embeds)
    raw_image = image_branch_scores(record, image_head, text_embeds, cfg.variant)
    prob_text = branch_probs(raw_text)
    prob_image = branch_probs(raw_image)
    prob_mmlr = ensemble_mmlr(prob_text, prob_image, vocab, cfg)
    return MlrScores(
        image_id=record.image_id,
        raw_text=raw_text,
        raw_image=raw_image,
        prob_text=np.clip(prob_text, cfg.prob_floor, 1.0),
        prob_image=np.clip(prob_image, cfg.prob_floor, 1.0),
        prob_mmlr=np.clip(prob_mmlr, cfg.prob_floor, 1.0),
    )
