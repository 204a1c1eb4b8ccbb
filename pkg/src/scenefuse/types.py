"""Domain types shared across the toolkit.

All types are immutable after construction; arrays are frozen so instances
can be shared freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DatasetValidationError, DimensionMismatchError, InvalidConfigError

SPLITS = ("base", "novel")
GROUPS = ("rare", "common", "frequent")
VARIANTS = ("visual_mlr", "visual_mlr_plus")

Box = tuple[float, float, float, float]


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.asarray(arr, dtype=np.float64)
    out.flags.writeable = False
    return out


def validate_box(box: Sequence[float]) -> Box:
    """Check [x1, y1, x2, y2] finiteness and strict ordering."""
    if len(box) != 4:
        raise DatasetValidationError(f"box must have 4 coordinates, got {len(box)}")
    x1, y1, x2, y2 = (float(v) for v in box)
    if not all(np.isfinite(v) for v in (x1, y1, x2, y2)):
        raise DatasetValidationError(f"box has non-finite coordinates: {box}")
    if not (x1 < x2 and y1 < y2):
        raise DatasetValidationError(f"box is degenerate or inverted: {box}")
    return (x1, y1, x2, y2)


@dataclass(frozen=True)
class Category:
    id: int
    name: str
    split: str
    group: str | None = None

    def __post_init__(self) -> None:
        if self.split not in SPLITS:
            raise InvalidConfigError(f"unknown split {self.split!r} for category {self.id}")
        if self.group is not None and self.group not in GROUPS:
            raise InvalidConfigError(f"unknown group {self.group!r} for category {self.id}")
        if not self.name:
            raise InvalidConfigError(f"category {self.id} has an empty name")


class CategoryVocabulary:
    """Ordered category set with a base/novel split and optional frequency group.

    Ids must be contiguous 0..C-1 and names unique; at least one category
    must belong to the base split.
    """

    def __init__(self, categories: Iterable[Category]) -> None:
        cats = sorted(categories, key=lambda c: c.id)
        if not cats:
            raise InvalidConfigError("vocabulary is empty")
        ids = [c.id for c in cats]
        if ids != list(range(len(cats))):
            raise InvalidConfigError("category ids must be contiguous 0..C-1 and unique")
        names = [c.name for c in cats]
        if len(set(names)) != len(names):
            raise InvalidConfigError("category names must be unique")
        if not any(c.split == "base" for c in cats):
            raise InvalidConfigError("vocabulary needs at least one base category")
        self._categories = tuple(cats)
        self._base_ids = tuple(c.id for c in cats if c.split == "base")
        self._novel_ids = tuple(c.id for c in cats if c.split == "novel")
        mask = np.zeros(len(cats), dtype=bool)
        mask[list(self._base_ids)] = True
        self._base_mask = mask
        self._base_mask.flags.writeable = False

    def __len__(self) -> int:
        return len(self._categories)

    def __iter__(self):
        return iter(self._categories)

    def __eq__(self, other) -> bool:
        return isinstance(other, CategoryVocabulary) and self._categories == other._categories

    @property
    def size(self) -> int:
        return len(self._categories)

    @property
    def categories(self) -> tuple[Category, ...]:
        return self._categories

    @property
    def base_ids(self) -> tuple[int, ...]:
        return self._base_ids

    @property
    def novel_ids(self) -> tuple[int, ...]:
        return self._novel_ids

    @property
    def base_mask(self) -> np.ndarray:
        return self._base_mask

    def is_base(self, category_id: int) -> bool:
        return bool(self._base_mask[category_id])

    def group_ids(self, group: str) -> tuple[int, ...]:
        return tuple(c.id for c in self._categories if c.group == group)

    @property
    def has_groups(self) -> bool:
        return any(c.group is not None for c in self._categories)

    def check_id(self, category_id: int) -> int:
        if not 0 <= category_id < self.size:
            raise DatasetValidationError(f"category id {category_id} outside 0..{self.size - 1}")
        return category_id

    def to_dict(self) -> dict:
        cats = []
        for c in self._categories:
            entry = {"id": c.id, "name": c.name, "split": c.split}
            if c.group is not None:
                entry["group"] = c.group
            cats.append(entry)
        return {"categories": cats}

    @classmethod
    def from_dict(cls, payload: dict) -> "CategoryVocabulary":
        try:
            cats = [
                Category(
                    id=int(entry["id"]),
                    name=str(entry["name"]),
                    split=str(entry["split"]),
                    group=entry.get("group"),
                )
                for entry in payload["categories"]
            ]
        except (KeyError, TypeError) as exc:
            raise DatasetValidationError(f"malformed vocabulary payload: {exc}") from exc
        return cls(cats)


@dataclass(frozen=True)
class EmbeddingVector:
    """Real vector with an explicit unit-norm flag.

    When ``unit`` is set the L2 norm must equal 1 within 1e-6.
    """

    values: np.ndarray
    unit: bool = False

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise DimensionMismatchError(f"expected a non-empty 1-d vector, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidConfigError("embedding has non-finite entries")
        if self.unit:
            norm = float(np.linalg.norm(arr))
            if abs(norm - 1.0) > 1e-6:
                raise InvalidConfigError(f"unit flag set but norm is {norm}")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class ImageRecord:
    """Per-image inputs: global feature, optional teacher embedding, labels."""

    image_id: str
    global_feature: EmbeddingVector
    teacher_embedding: EmbeddingVector | None = None
    labels: frozenset[int] = frozenset()
    width: int | None = None
    height: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", frozenset(int(c) for c in self.labels))

    def validate_labels(self, vocab: CategoryVocabulary) -> None:
        for cid in self.labels:
            vocab.check_id(cid)


@dataclass(frozen=True)
class MlrScores:
    """Raw and calibrated per-category scores for one image."""

    image_id: str
    raw_text: np.ndarray
    raw_image: np.ndarray
    prob_text: np.ndarray
    prob_image: np.ndarray
    prob_mmlr: np.ndarray

    def __post_init__(self) -> None:
        vectors = {}
        length = None
        for name in ("raw_text", "raw_image", "prob_text", "prob_image", "prob_mmlr"):
            arr = _freeze(getattr(self, name))
            if arr.ndim != 1:
                raise DatasetValidationError(f"{name} must be 1-d")
            if length is None:
                length = arr.shape[0]
            elif arr.shape[0] != length:
                raise DatasetValidationError("score vectors must share one length")
            vectors[name] = arr
        for name in ("prob_text", "prob_image", "prob_mmlr"):
            arr = vectors[name]
            if np.any(arr <= 0.0) or np.any(arr > 1.0):
                raise DatasetValidationError(f"{name} entries must lie in (0, 1]")
        for name, arr in vectors.items():
            object.__setattr__(self, name, arr)

    @property
    def n_categories(self) -> int:
        return int(self.prob_mmlr.shape[0])


@dataclass(frozen=True)
class DetectionInstance:
    """One detected box with sparse per-category probabilities."""

    box: Box
    scores: tuple[tuple[int, float], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "box", validate_box(self.box))
        checked = []
        for cid, p in self.scores:
            p = float(p)
            if not (0.0 <= p <= 1.0) or not np.isfinite(p):
                raise DatasetValidationError(f"detection probability {p} outside [0, 1]")
            checked.append((int(cid), p))
        object.__setattr__(self, "scores", tuple(checked))


@dataclass(frozen=True)
class DetectionSet:
    image_id: str
    instances: tuple[DetectionInstance, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "instances", tuple(self.instances))

    def validate_categories(self, vocab: CategoryVocabulary) -> None:
        for inst in self.instances:
            for cid, _ in inst.scores:
                vocab.check_id(cid)


@dataclass(frozen=True)
class GroundTruthObject:
    box: Box
    category_id: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "box", validate_box(self.box))
        object.__setattr__(self, "category_id", int(self.category_id))


@dataclass(frozen=True)
class GroundTruthSet:
    image_id: str
    objects: tuple[GroundTruthObject, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(self.objects))


@dataclass(frozen=True)
class FusionConfig:
    """Ensemble and refinement hyperparameters.

    ``temperature`` is consumed only by the synthetic detector; all
    probability inputs are clamped to [prob_floor, 1] before any
    exponentiation so geometric means stay finite.
    """

    lambda_base: float = 0.8
    lambda_novel: float = 0.8
    gamma: float = 0.5
    temperature: float = 0.05
    variant: str = "visual_mlr_plus"
    prob_floor: float = 1e-12

    def __post_init__(self) -> None:
        for name in ("lambda_base", "lambda_novel", "gamma"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidConfigError(f"{name}={value} outside [0, 1]")
        if self.temperature <= 0.0:
            raise InvalidConfigError(f"temperature={self.temperature} must be positive")
        if self.variant not in VARIANTS:
            raise InvalidConfigError(f"unknown variant {self.variant!r}")
        if self.prob_floor <= 0.0:
            raise InvalidConfigError("prob_floor must be positive")
