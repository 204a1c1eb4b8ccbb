"""Detection and multi-label metrics.

Average precision follows the 101-point interpolated convention at a single
IoU threshold (default 0.5): detections are greedily matched per category,
precision is upper-enveloped over recall, and the envelope is averaged on
the recall grid {0.00, 0.01, ..., 1.00}. Multi-label recall@k is micro
recall over (image, label) pairs, reported per base/novel group.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import DatasetValidationError
from .types import (
    Box,
    CategoryVocabulary,
    DetectionSet,
    GroundTruthSet,
    ImageRecord,
    MlrScores,
    validate_box,
)

RECALL_GRID = np.arange(101) / 100.0


@dataclass(frozen=True)
class EvalReport:
    """Grouped AP and multi-label recall figures plus input counts.

    Group means are computed only over categories with at least one
    ground-truth object; a group with no populated category is ``None``.
    """

    per_category_ap: dict[int, float]
    ap_all: float | None
    ap_base: float | None
    ap_novel: float | None
    ap_rare: float | None = None
    ap_common: float | None = None
    ap_frequent: float | None = None
    r_mlr_base: float | None = None
    r_mlr_novel: float | None = None
    n_images: int = 0
    n_detections: int = 0
    n_ground_truth: int = 0

    def to_dict(self) -> dict:
        payload = {
            "per_category_ap": {str(cid): ap for cid, ap in sorted(self.per_category_ap.items())},
            "counts": {
                "images": self.n_images,
                "detections": self.n_detections,
                "ground_truth": self.n_ground_truth,
            },
        }
        for name in ("ap_all", "ap_base", "ap_novel", "ap_rare", "ap_common",
                     "ap_frequent", "r_mlr_base", "r_mlr_novel"):
            value = getattr(self, name)
            if value is not None:
                payload[name] = value
        return payload

    def to_text(self) -> str:
        lines = [
            f"images {self.n_images}",
            f"detections {self.n_detections}",
            f"ground_truth {self.n_ground_truth}",
        ]
        for name in ("ap_all", "ap_base", "ap_novel", "ap_rare", "ap_common",
                     "ap_frequent", "r_mlr_base", "r_mlr_novel"):
            value = getattr(self, name)
            if value is not None:
                lines.append(f"{name} {value!r}")
        return "\n".join(lines) + "\n"

    def with_recalls(self, r_novel: float | None, r_base: float | None) -> "EvalReport":
        return replace(self, r_mlr_novel=r_novel, r_mlr_base=r_base)


def iou(a: Sequence[float], b: Sequence[float]) -> float:
    """Intersection-over-union of two [x1, y1, x2, y2] boxes.

    A zero-area box overlaps nothing by definition.
    """
    ax1, ay1, ax2, ay2 = (float(v) for v in a)
    bx1, by1, bx2, by2 = (float(v) for v in b)
    area_a = max(0.0, ax2 - ax1) * max(0.0, ay2 - ay1)
    area_b = max(0.0, bx2 - bx1) * max(0.0, by2 - by1)
    if area_a == 0.0 or area_b == 0.0:
        return 0.0
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (area_a + area_b - inter)


def match_detections(
    detections: Sequence[tuple[str, Box, float]],
    ground_truths: Sequence[tuple[str, Box]],
    iou_threshold: float = 0.5,
) -> tuple[list[bool], int]:
    """Greedy score-ordered matching for one category over a whole dataset.

    Detections are sorted by descending score (stable on ties); each one
    claims the unmatched same-image ground truth with the highest IoU at or
    above the threshold. Returns ranked TP flags plus the ground-truth count.
    """
    per_image_gts: dict[str, list[Box]] = {}
    for image_id, box in ground_truths:
        per_image_gts.setdefault(image_id, []).append(validate_box(box))
    matched: dict[str, list[bool]] = {
        image_id: [False] * len(boxes) for image_id, boxes in per_image_gts.items()
    }
    order = sorted(range(len(detections)), key=lambda i: -float(detections[i][2]))
    flags: list[bool] = []
    for i in order:
        image_id, box, _score = detections[i]
        box = validate_box(box)
        best_iou, best_j = 0.0, -1
        for j, gt_box in enumerate(per_image_gts.get(image_id, ())):
            if matched.get(image_id, [])[j]:
                continue
            overlap = iou(box, gt_box)
            if overlap >= iou_threshold and overlap > best_iou:
                best_iou, best_j = overlap, j
        if best_j >= 0:
            matched[image_id][best_j] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags, len(ground_truths)


def average_precision(flags: Sequence[bool], n_gt: int) -> float:
    """101-point interpolated AP from ranked TP/FP flags.

    Interpolated precision at recall r is the maximum precision achieved at
    any recall >= r. Undefined for ``n_gt == 0``; callers exclude such
    categories.
    """
    if n_gt < 0:
        raise ValueError("n_gt must be non-negative")
    if n_gt == 0:
        raise ValueError("AP is undefined for a category with no ground truth")
    if len(flags) == 0:
        return 0.0
    tp = np.cumsum(np.asarray(flags, dtype=np.float64))
    fp = np.cumsum(1.0 - np.asarray(flags, dtype=np.float64))
    recall = tp / n_gt
    precision = tp / (tp + fp)
    # Envelope: running max of precision from the right.
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    indices = np.searchsorted(recall, RECALL_GRID, side="left")
    interp = np.where(indices < len(flags), envelope[np.minimum(indices, len(flags) - 1)], 0.0)
    # fsum keeps the mean correctly rounded and independent of summation order
    return math.fsum(interp) / len(RECALL_GRID)


def _mean_over(per_category_ap: dict[int, float], ids: Sequence[int]) -> float | None:
    values = [per_category_ap[cid] for cid in ids if cid in per_category_ap]
    if not values:
        return None
    return float(np.mean(values))


def map_report(
    detections: Sequence[DetectionSet],
    ground_truths: Sequence[GroundTruthSet],
    vocab: CategoryVocabulary,
    iou_threshold: float = 0.5,
) -> EvalReport:
    """Per-category AP plus novel/base (and optional frequency-group) means.

    Detection image ids must be a subset of ground-truth image ids; anything
    else indicates misaligned inputs and raises.
    """
    known_images = {g.image_id for g in ground_truths}
    if len(known_images) != len(ground_truths):
        raise DatasetValidationError("duplicate image id in ground truths")
    per_category_dets: dict[int, list[tuple[str, Box, float]]] = {}
    n_detections = 0
    for det in detections:
        if det.image_id not in known_images:
            raise DatasetValidationError(
                f"detections reference unknown image id {det.image_id!r}"
            )
        det.validate_categories(vocab)
        for inst in det.instances:
            n_detections += 1
            for cid, score in inst.scores:
                per_category_dets.setdefault(cid, []).append((det.image_id, inst.box, score))
    per_category_gts: dict[int, list[tuple[str, Box]]] = {}
    n_objects = 0
    for gt in ground_truths:
        for obj in gt.objects:
            vocab.check_id(obj.category_id)
            n_objects += 1
            per_category_gts.setdefault(obj.category_id, []).append((gt.image_id, obj.box))

    per_category_ap: dict[int, float] = {}
    for cid, gts in sorted(per_category_gts.items()):
        flags, n_gt = match_detections(per_category_dets.get(cid, []), gts, iou_threshold)
        per_category_ap[cid] = average_precision(flags, n_gt)

    report = EvalReport(
        per_category_ap=per_category_ap,
        ap_all=_mean_over(per_category_ap, range(vocab.size)),
        ap_base=_mean_over(per_category_ap, vocab.base_ids),
        ap_novel=_mean_over(per_category_ap, vocab.novel_ids),
        n_images=len(ground_truths),
        n_detections=n_detections,
        n_ground_truth=n_objects,
    )
    if vocab.has_groups:
        report = replace(
            report,
            ap_rare=_mean_over(per_category_ap, vocab.group_ids("rare")),
            ap_common=_mean_over(per_category_ap, vocab.group_ids("common")),
            ap_frequent=_mean_over(per_category_ap, vocab.group_ids("frequent")),
        )
    return report


def recall_at_k(
    scores: Sequence[MlrScores],
    records: Sequence[ImageRecord],
    vocab: CategoryVocabulary,
    k: int = 10,
) -> tuple[float | None, float | None]:
    """Micro recall of ground-truth labels inside each image's top-k ranking.

    Categories are ranked by ``prob_mmlr`` descending with ties broken by
    category id. Returns ``(novel, base)``; a group with no labelled pairs
    anywhere is reported as ``None``.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    by_id = {r.image_id: r for r in records}
    if len(by_id) != len(records):
        raise DatasetValidationError("duplicate image id in records")
    hits = {"base": 0, "novel": 0}
    totals = {"base": 0, "novel": 0}
    for entry in scores:
        record = by_id.get(entry.image_id)
        if record is None:
            raise DatasetValidationError(
                f"scores reference unknown image id {entry.image_id!r}"
            )
        if entry.n_categories != vocab.size:
            raise DatasetValidationError("score length does not match vocabulary size")
        probs = entry.prob_mmlr
        ranked = sorted(range(vocab.size), key=lambda c: (-probs[c], c))
        top = set(ranked[:k])
        for cid in record.labels:
            vocab.check_id(cid)
            group = "base" if vocab.is_base(cid) else "novel"
            totals[group] += 1
            if cid in top:
                hits[group] += 1
    r_novel = hits["novel"] / totals["novel"] if totals["novel"] else None
    r_base = hits["base"] / totals["base"] if totals["base"] else None
    return r_novel, r_base
