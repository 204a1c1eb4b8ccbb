"""AdamW optimization and the training loops for both head branches.

Training is single-threaded and fully deterministic: head initialization and
epoch shuffling both derive from ``TrainConfig.seed`` through one splitmix64
stream, so two runs with the same inputs produce bit-identical parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DatasetValidationError,
    DimensionMismatchError,
    InvalidConfigError,
    MissingTeacherEmbeddingError,
    NovelLabelInTrainingError,
)
from .heads import (
    MlrHead,
    _cosine_chain,
    _check_labels,
    _rank_score_grad,
    branch_scores,
    dist_loss,
    rank_loss,
)
from .mathops import row_normalize
from .rng import SplitMix64
from .types import CategoryVocabulary, ImageRecord

REDUCTIONS = ("sum", "mean_pairs")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 1e-4
    batch_size: int = 64
    iterations: int = 1000
    seed: int = 0
    loss_reduction: str = "mean_pairs"

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise InvalidConfigError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise InvalidConfigError("betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise InvalidConfigError("epsilon must be positive")
        if self.weight_decay < 0:
            raise InvalidConfigError("weight_decay must be non-negative")
        if self.batch_size < 1:
            raise InvalidConfigError("batch_size must be at least 1")
        if self.iterations < 0:
            raise InvalidConfigError("iterations must be non-negative")
        if self.loss_reduction not in REDUCTIONS:
            raise InvalidConfigError(f"unknown loss_reduction {self.loss_reduction!r}")


@dataclass(frozen=True)
class OptimizerState:
    """First/second moment estimates shaped like the head parameters."""

    m_weight: np.ndarray
    v_weight: np.ndarray
    m_bias: np.ndarray
    v_bias: np.ndarray
    step_count: int = 0

    @classmethod
    def initial(cls, head: MlrHead) -> "OptimizerState":
        return cls(
            m_weight=np.zeros_like(head.weight),
            v_weight=np.zeros_like(head.weight),
            m_bias=np.zeros_like(head.bias),
            v_bias=np.zeros_like(head.bias),
            step_count=0,
        )

    def check_shapes(self, head: MlrHead) -> None:
        if self.m_weight.shape != head.weight.shape or self.m_bias.shape != head.bias.shape:
            raise DimensionMismatchError("optimizer state does not match head shapes")


def adamw_step(
    head: MlrHead,
    state: OptimizerState,
    grads: tuple[np.ndarray, np.ndarray],
    config: TrainConfig,
) -> tuple[MlrHead, OptimizerState]:
    """One bias-corrected adaptive-moment update with decoupled weight decay."""
    g_weight, g_bias = grads
    if g_weight.shape != head.weight.shape or g_bias.shape != head.bias.shape:
        raise DimensionMismatchError("gradient shapes do not match head shapes")
    state.check_shapes(head)
    t = state.step_count + 1
    b1, b2 = config.beta1, config.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t

    def update(param, m, v, grad):
        m_new = b1 * m + (1.0 - b1) * grad
        v_new = b2 * v + (1.0 - b2) * grad**2
        m_hat = m_new / bc1
        v_hat = v_new / bc2
        stepped = (
            param
            - config.learning_rate * config.weight_decay * param
            - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
        )
        return stepped, m_new, v_new

    w_new, mw, vw = update(head.weight, state.m_weight, state.v_weight, g_weight)
    b_new, mb, vb = update(head.bias, state.m_bias, state.v_bias, g_bias)
    return (
        MlrHead(weight=w_new, bias=b_new),
        OptimizerState(m_weight=mw, v_weight=vw, m_bias=mb, v_bias=vb, step_count=t),
    )


def initial_head(input_dim: int, output_dim: int, seed: int) -> MlrHead:
    """Seeded fan-in initialization: weights uniform in +-1/sqrt(D), bias zero."""
    rng = SplitMix64(seed)
    bound = 1.0 / math.sqrt(input_dim)
    weight = (
        rng.uniform_vector(output_dim * input_dim).reshape(output_dim, input_dim) * 2.0 - 1.0
    ) * bound
    return MlrHead(weight=weight, bias=np.zeros(output_dim))


class _BatchStream:
    """Sequential batches over seeded shuffled epochs; a last partial batch
    is kept rather than dropped."""

    def __init__(self, n: int, batch_size: int, rng: SplitMix64) -> None:
        self._n = n
        self._batch = batch_size
        self._rng = rng
        self._order = rng.permutation(n)
        self._cursor = 0

    def next_indices(self) -> np.ndarray:
        if self._cursor >= self._n:
            self._order = self._rng.permutation(self._n)
            self._cursor = 0
        out = self._order[self._cursor : self._cursor + self._batch]
        self._cursor += self._batch
        return out


def _batch_rank_gradient(
    weight: np.ndarray,
    bias: np.ndarray,
    features: np.ndarray,
    label_lists: Sequence[np.ndarray],
    unit_rows: np.ndarray,
    reduction: str,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean-over-images ranking loss and its gradient for one mini-batch."""
    batch = features.shape[0]
    projected = features @ weight.T + bias
    d_proj = np.zeros_like(projected)
    total = 0.0
    all_idx = np.arange(unit_rows.shape[0], dtype=np.intp)
    for i in range(batch):
        pos = label_lists[i]
        neg = np.setdiff1d(all_idx, pos, assume_unique=True)
        norm = float(np.linalg.norm(projected[i]))
        if norm == 0.0:
            raise DatasetValidationError("projected feature collapsed to zero norm")
        scores = unit_rows @ (projected[i] / norm)
        if pos.size and neg.size:
            hinge = np.maximum(1.0 + scores[neg][None, :] - scores[pos][:, None], 0.0)
            loss_i = float(hinge.sum())
            if reduction == "mean_pairs":
                loss_i /= pos.size * neg.size
            total += loss_i
        score_grad = _rank_score_grad(scores, pos, neg, reduction)
        d_proj[i] = _cosine_chain(projected[i], unit_rows, score_grad)
    g_weight = d_proj.T @ features / batch
    g_bias = d_proj.mean(axis=0)
    return total / batch, g_weight, g_bias


def _batch_dist_gradient(
    weight: np.ndarray,
    bias: np.ndarray,
    features: np.ndarray,
    teachers: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean-over-images L1 distillation loss and gradient for one mini-batch."""
    batch = features.shape[0]
    projected = features @ weight.T + bias
    residual = projected - teachers
    loss = float(np.abs(residual).sum()) / batch
    d_proj = np.sign(residual)
    g_weight = d_proj.T @ features / batch
    g_bias = d_proj.mean(axis=0)
    return loss, g_weight, g_bias


def _stack_features(dataset: Sequence[ImageRecord]) -> np.ndarray:
    if not dataset:
        raise DatasetValidationError("training dataset is empty")
    dims = {r.global_feature.dim for r in dataset}
    if len(dims) != 1:
        raise DimensionMismatchError(f"mixed global feature dims: {sorted(dims)}")
    return np.stack([r.global_feature.values for r in dataset])


def train_text_head(
    dataset: Sequence[ImageRecord],
    text_embeds,
    config: TrainConfig,
    *,
    vocab: CategoryVocabulary,
    loss_history: list[float] | None = None,
) -> MlrHead:
    """Fit the text-alignment branch with the hinge ranking loss.

    Only base-split categories participate: their text-embedding rows form
    the ranking space and any novel label in the training records is an
    error. Returns the head after ``config.iterations`` AdamW steps.
    """
    features = _stack_features(dataset)
    rows = np.asarray(text_embeds, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] != vocab.size:
        raise DimensionMismatchError(
            f"text embedding table shape {rows.shape} does not match vocabulary size {vocab.size}"
        )
    base_ids = np.array(vocab.base_ids, dtype=np.intp)
    base_pos = {cid: i for i, cid in enumerate(vocab.base_ids)}
    label_lists = []
    for record in dataset:
        for cid in record.labels:
            vocab.check_id(cid)
            if not vocab.is_base(cid):
                raise NovelLabelInTrainingError(
                    f"record {record.image_id!r} carries novel label {cid}"
                )
        label_lists.append(
            np.array(sorted(base_pos[cid] for cid in record.labels), dtype=np.intp)
        )
    unit_rows = row_normalize(rows[base_ids])

    head = initial_head(features.shape[1], rows.shape[1], config.seed)
    rng = SplitMix64(config.seed ^ 0xA5A5A5A5A5A5A5A5)  # shuffle stream, split from init
    state = OptimizerState.initial(head)
    stream = _BatchStream(features.shape[0], config.batch_size, rng)
    for _ in range(config.iterations):
        idx = stream.next_indices()
        loss, g_w, g_b = _batch_rank_gradient(
            head.weight, head.bias, features[idx], [label_lists[i] for i in idx],
            unit_rows, config.loss_reduction,
        )
        if loss_history is not None:
            loss_history.append(loss)
        head, state = adamw_step(head, state, (g_w, g_b), config)
    return head


def train_image_head(
    dataset: Sequence[ImageRecord],
    config: TrainConfig,
    *,
    loss_history: list[float] | None = None,
) -> MlrHead:
    """Fit the distillation branch by regressing teacher embeddings in L1."""
    features = _stack_features(dataset)
    teachers = []
    for record in dataset:
        if record.teacher_embedding is None:
            raise MissingTeacherEmbeddingError(
                f"record {record.image_id!r} lacks a teacher embedding"
            )
        teachers.append(record.teacher_embedding.values)
    teacher_mat = np.stack(teachers)

    head = initial_head(features.shape[1], teacher_mat.shape[1], config.seed)
    rng = SplitMix64(config.seed ^ 0xA5A5A5A5A5A5A5A5)
    state = OptimizerState.initial(head)
    stream = _BatchStream(features.shape[0], config.batch_size, rng)
    for _ in range(config.iterations):
        idx = stream.next_indices()
        loss, g_w, g_b = _batch_dist_gradient(
            head.weight, head.bias, features[idx], teacher_mat[idx]
        )
        if loss_history is not None:
            loss_history.append(loss)
        head, state = adamw_step(head, state, (g_w, g_b), config)
    return head


def _batch_loss(
    head: MlrHead,
    features: np.ndarray,
    loss_kind: str,
    text_embeds,
    labels,
    teachers,
    reduction: str,
) -> float:
    total = 0.0
    for i in range(features.shape[0]):
        if loss_kind == "rank":
            scores = branch_scores(head, features[i], text_embeds)
            total += rank_loss(scores, labels[i], reduction)
        else:
            projected = head.weight @ features[i] + head.bias
            total += dist_loss(projected, teachers[i])
    return total / features.shape[0]


def random_check_instance(
    seed: int,
    *,
    input_dim: int = 16,
    output_dim: int = 8,
    n_categories: int = 10,
    batch: int = 4,
    kink_tol: float = 1e-6,
) -> dict:
    """Seeded random head/batch instance for gradient verification.

    Instances whose hinge margins or L1 residuals sit within ``kink_tol`` of
    a kink are redrawn from the same stream, since subgradients and finite
    differences legitimately disagree there.
    """
    rng = SplitMix64(seed)
    while True:
        weight = rng.normal_vector(output_dim * input_dim).reshape(output_dim, input_dim)
        bias = rng.normal_vector(output_dim) * 0.1
        head = MlrHead(weight=weight, bias=bias)
        features = rng.normal_vector(batch * input_dim).reshape(batch, input_dim)
        text_embeds = rng.normal_vector(n_categories * output_dim).reshape(
            n_categories, output_dim
        )
        teachers = rng.normal_vector(batch * output_dim).reshape(batch, output_dim)
        labels = []
        for _ in range(batch):
            count = 1 + rng.randint(n_categories - 1)
            labels.append(set(int(c) for c in rng.permutation(n_categories)[:count]))

        unit_rows = row_normalize(text_embeds)
        near_kink = False
        projected = features @ weight.T + bias
        for i in range(batch):
            scores = unit_rows @ (projected[i] / np.linalg.norm(projected[i]))
            pos = np.array(sorted(labels[i]), dtype=np.intp)
            neg = np.setdiff1d(np.arange(n_categories, dtype=np.intp), pos)
            margins = 1.0 + scores[neg][None, :] - scores[pos][:, None]
            if margins.size and np.any(np.abs(margins) < kink_tol):
                near_kink = True
            if np.any(np.abs(projected[i] - teachers[i]) < kink_tol):
                near_kink = True
        if not near_kink:
            return {
                "head": head,
                "features": features,
                "text_embeds": text_embeds,
                "labels": labels,
                "teachers": teachers,
            }


def finite_diff_check(
    head: MlrHead,
    features,
    *,
    loss_kind: str,
    text_embeds=None,
    labels: Sequence | None = None,
    teachers=None,
    reduction: str = "mean_pairs",
    h: float = 1e-5,
) -> float:
    """Compare analytic batch gradients against central finite differences.

    Every weight and bias entry is differenced; the worst absolute
    deviation is reported relative to max(|analytic|, |numeric|, 1e-12)
    where the magnitudes are taken over the whole gradient. Batched L1
    gradients contain exact zeros whenever per-image signs cancel, and a
    per-entry denominator there would only measure the rounding noise of
    the loss evaluations, not gradient correctness.
    """
    if h <= 0:
        raise InvalidConfigError("finite difference step must be positive")
    if loss_kind not in ("rank", "dist"):
        raise InvalidConfigError(f"unknown loss kind {loss_kind!r}")
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2:
        raise DimensionMismatchError("features must be a batch x dim matrix")
    if loss_kind == "rank":
        if text_embeds is None or labels is None:
            raise InvalidConfigError("rank check needs text_embeds and labels")
        unit_rows = row_normalize(np.asarray(text_embeds, dtype=np.float64))
        label_idx = [_check_labels(l, unit_rows.shape[0]) for l in labels]
        _, g_w, g_b = _batch_rank_gradient(
            head.weight, head.bias, feats, label_idx, unit_rows, reduction
        )
    else:
        if teachers is None:
            raise InvalidConfigError("dist check needs teacher embeddings")
        teach = np.asarray(teachers, dtype=np.float64)
        _, g_w, g_b = _batch_dist_gradient(head.weight, head.bias, feats, teach)

    def loss_at(weight: np.ndarray, bias: np.ndarray) -> float:
        probe = MlrHead(weight=weight, bias=bias)
        return _batch_loss(probe, feats, loss_kind, text_embeds, labels, teachers, reduction)

    fd_w = np.zeros_like(g_w)
    fd_b = np.zeros_like(g_b)
    weight = head.weight.copy()
    bias = head.bias.copy()
    for (r, c), _ in np.ndenumerate(g_w):
        orig = weight[r, c]
        weight[r, c] = orig + h
        up = loss_at(weight, bias)
        weight[r, c] = orig - h
        down = loss_at(weight, bias)
        weight[r, c] = orig
        fd_w[r, c] = (up - down) / (2.0 * h)
    for (k,), _ in np.ndenumerate(g_b):
        orig = bias[k]
        bias[k] = orig + h
        up = loss_at(weight, bias)
        bias[k] = orig - h
        down = loss_at(weight, bias)
        bias[k] = orig
        fd_b[k] = (up - down) / (2.0 * h)
    deviation = max(np.abs(g_w - fd_w).max(), np.abs(g_b - fd_b).max())
    analytic_scale = max(np.abs(g_w).max(), np.abs(g_b).max())
    numeric_scale = max(np.abs(fd_w).max(), np.abs(fd_b).max())
    return deviation / max(analytic_scale, numeric_scale, 1e-12)
