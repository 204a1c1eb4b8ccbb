"""Learnable projection heads: pooling, scoring, and the two training losses.

The head is a single affine map from the global feature space (dim D) into
the shared embedding space (dim d). Gradients are computed analytically;
``training.finite_diff_check`` verifies them against central differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateVectorError,
    DimensionMismatchError,
    EmptyFeatureMapError,
    InvalidConfigError,
)
from .mathops import as_vector, row_normalize
from .types import EmbeddingVector


@dataclass(frozen=True)
class MlrHead:
    """Affine projection ``x -> weight @ x + bias``."""

    weight: np.ndarray  # (d, D)
    bias: np.ndarray  # (d,)

    def __post_init__(self) -> None:
        w = np.asarray(self.weight, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
            raise DimensionMismatchError(
                f"incompatible head shapes: weight {w.shape}, bias {b.shape}"
            )
        if w.shape[0] == 0 or w.shape[1] == 0:
            raise InvalidConfigError("head dimensions must be positive")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise InvalidConfigError("head parameters must be finite")
        w = w.copy()
        b = b.copy()
        w.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def input_dim(self) -> int:
        return int(self.weight.shape[1])

    @property
    def output_dim(self) -> int:
        return int(self.weight.shape[0])


def global_pool_concat(feature_maps: Sequence[np.ndarray]) -> EmbeddingVector:
    """Channel-wise spatial max per pyramid level, concatenated in level order."""
    if len(feature_maps) == 0:
        raise EmptyFeatureMapError("need at least one feature map level")
    pooled = []
    for idx, level in enumerate(feature_maps):
        arr = np.asarray(level, dtype=np.float64)
        if arr.ndim != 3:
            raise DimensionMismatchError(
                f"level {idx} must be height x width x channels, got shape {arr.shape}"
            )
        if arr.size == 0:
            raise EmptyFeatureMapError(f"level {idx} has no elements")
        pooled.append(arr.max(axis=(0, 1)))
    return EmbeddingVector(np.concatenate(pooled))


def project(head: MlrHead, x) -> EmbeddingVector:
    """Apply the affine head to a global feature vector."""
    arr = as_vector(x)
    if arr.shape[0] != head.input_dim:
        raise DimensionMismatchError(
            f"feature dim {arr.shape[0]} does not match head input dim {head.input_dim}"
        )
    return EmbeddingVector(head.weight @ arr + head.bias)


def branch_scores(head: MlrHead, x, text_embeds) -> np.ndarray:
    """Cosine similarity of the projected feature against every category row."""
    projected = project(head, x).values
    norm = float(np.linalg.norm(projected))
    if norm == 0.0:
        raise DegenerateVectorError("projected feature has zero norm")
    rows = np.asarray(text_embeds, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != projected.shape[0]:
        raise DimensionMismatchError(
            f"projection dim {projected.shape[0]} does not match table shape {rows.shape}"
        )
    scores = row_normalize(rows) @ (projected / norm)
    return np.clip(scores, -1.0, 1.0)


def _check_labels(labels: Iterable[int], n_categories: int) -> np.ndarray:
    idx = np.array(sorted(int(c) for c in labels), dtype=np.intp)
    if idx.size and (idx[0] < 0 or idx[-1] >= n_categories):
        raise IndexError(f"label outside 0..{n_categories - 1}: {idx.tolist()}")
    return idx


def _hinge_margins(scores: np.ndarray, pos: np.ndarray, neg: np.ndarray) -> np.ndarray:
    # margins[p, n] = 1 + s_n - s_p
    return 1.0 + scores[neg][None, :] - scores[pos][:, None]


def rank_loss(scores, labels: Iterable[int], reduction: str = "sum") -> float:
    """Pairwise hinge ranking loss over (positive, negative) category pairs.

    ``sum`` adds every pair's hinge; ``mean_pairs`` divides by the number of
    pairs. No positives or no negatives means no pairs, hence zero loss.
    """
    s = as_vector(scores)
    pos = _check_labels(labels, s.shape[0])
    neg = np.setdiff1d(np.arange(s.shape[0], dtype=np.intp), pos, assume_unique=True)
    if pos.size == 0 or neg.size == 0:
        return 0.0
    hinge = np.maximum(_hinge_margins(s, pos, neg), 0.0)
    total = float(hinge.sum())
    if reduction == "sum":
        return total
    if reduction == "mean_pairs":
        return total / (pos.size * neg.size)
    raise InvalidConfigError(f"unknown reduction {reduction!r}")


def _rank_score_grad(scores: np.ndarray, pos: np.ndarray, neg: np.ndarray, reduction: str) -> np.ndarray:
    """Gradient of the hinge ranking loss with respect to the score vector.

    The subgradient at an exactly-zero hinge is taken as 0 (inactive).
    """
    grad = np.zeros_like(scores)
    if pos.size == 0 or neg.size == 0:
        return grad
    active = _hinge_margins(scores, pos, neg) > 0.0
    np.add.at(grad, neg, active.sum(axis=0).astype(np.float64))
    np.add.at(grad, pos, -active.sum(axis=1).astype(np.float64))
    if reduction == "mean_pairs":
        grad /= pos.size * neg.size
    elif reduction != "sum":
        raise InvalidConfigError(f"unknown reduction {reduction!r}")
    return grad


def _cosine_chain(projected: np.ndarray, unit_rows: np.ndarray, score_grad: np.ndarray) -> np.ndarray:
    """Pull a gradient on cosine scores back to the projected vector."""
    norm = float(np.linalg.norm(projected))
    if norm == 0.0:
        raise DegenerateVectorError("projected feature has zero norm")
    unit = projected / norm
    scores = unit_rows @ unit
    return (score_grad @ unit_rows - float(score_grad @ scores) * unit) / norm


def rank_loss_grad(
    head: MlrHead, x, text_embeds, labels: Iterable[int], reduction: str = "sum"
) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradient of ``rank_loss(branch_scores(...))`` w.r.t. the head."""
    arr = as_vector(x)
    if arr.shape[0] != head.input_dim:
        raise DimensionMismatchError(
            f"feature dim {arr.shape[0]} does not match head input dim {head.input_dim}"
        )
    unit_rows = row_normalize(np.asarray(text_embeds, dtype=np.float64))
    projected = head.weight @ arr + head.bias
    norm = float(np.linalg.norm(projected))
    if norm == 0.0:
        raise DegenerateVectorError("projected feature has zero norm")
    scores = unit_rows @ (projected / norm)
    pos = _check_labels(labels, unit_rows.shape[0])
    neg = np.setdiff1d(np.arange(unit_rows.shape[0], dtype=np.intp), pos, assume_unique=True)
    score_grad = _rank_score_grad(scores, pos, neg, reduction)
    d_proj = _cosine_chain(projected, unit_rows, score_grad)
    return np.outer(d_proj, arr), d_proj


def dist_loss(e_image, teacher) -> float:
    """L1 distance between a projected embedding and its teacher."""
    a = as_vector(e_image)
    b = as_vector(teacher)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(np.abs(b - a).sum())


def dist_loss_grad(head: MlrHead, x, teacher) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradient of ``dist_loss(project(...), teacher)`` w.r.t. the head.

    sign(0) is taken as 0, so exactly-matched components contribute nothing.
    """
    arr = as_vector(x)
    if arr.shape[0] != head.input_dim:
        raise DimensionMismatchError(
            f"feature dim {arr.shape[0]} does not match head input dim {head.input_dim}"
        )
    t = as_vector(teacher)
    if t.shape[0] != head.output_dim:
        raise DimensionMismatchError(
            f"teacher dim {t.shape[0]} does not match head output dim {head.output_dim}"
        )
    projected = head.weight @ arr + head.bias
    d_proj = np.sign(projected - t)
    return np.outer(d_proj, arr), d_proj
