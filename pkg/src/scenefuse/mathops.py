"""Elementary embedding and score math every other module builds on.

All kernels compute in 64-bit floats regardless of input dtype.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    DegenerateVectorError,
    DimensionMismatchError,
    TooFewCategoriesError,
)
from .types import EmbeddingVector


def as_vector(v) -> np.ndarray:
    """Coerce an EmbeddingVector or array-like to a finite 1-d float64 array."""
    if isinstance(v, EmbeddingVector):
        return v.values
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatchError(f"expected a 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector has non-finite entries")
    return arr


def row_normalize(matrix) -> np.ndarray:
    """L2-normalize each row of a 2-d array; zero rows are rejected."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatchError(f"expected a 2-d matrix, got shape {m.shape}")
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateVectorError("matrix contains a zero row")
    return m / norms[:, None]


def l2_normalize(v) -> EmbeddingVector:
    """Scale a vector to unit L2 norm."""
    arr = as_vector(v)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise DegenerateVectorError("cannot normalize a zero vector")
    return EmbeddingVector(arr / norm, unit=True)


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two vectors, clamped to [-1, 1]."""
    va, vb = as_vector(a), as_vector(b)
    if va.shape != vb.shape:
        raise DimensionMismatchError(
            f"dimension mismatch: {va.shape[0]} vs {vb.shape[0]}"
        )
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise DegenerateVectorError("cosine similarity of a zero vector is undefined")
    return float(np.clip(float(va @ vb) / (na * nb), -1.0, 1.0))


def zscore_normalize(scores) -> np.ndarray:
    """Center and scale one image's per-category score vector.

    Uses the population standard deviation over all entries. Constant input
    carries no ranking signal and maps to the all-zero vector.
    """
    arr = as_vector(scores)
    if arr.shape[0] < 2:
        raise TooFewCategoriesError("normalization needs at least 2 categories")
    # ptp check first: the mean of a constant vector need not round back to
    # the constant, which would turn pure rounding noise into +-1 outputs
    if np.ptp(arr) == 0.0:
        return np.zeros_like(arr)
    mean = arr.mean()
    centered = arr - mean
    std = float(np.sqrt(np.mean(centered**2)))
    if std == 0.0:
        return np.zeros_like(arr)
    return centered / std


def stable_sigmoid(x):
    """Logistic function evaluated without overflow for large |x|.

    Accepts scalars or arrays; the exponential is always taken of a
    non-positive argument.
    """
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 0
    flat = np.atleast_1d(arr).astype(np.float64)
    out = np.empty_like(flat)
    pos = flat >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-flat[pos]))
    ex = np.exp(flat[~pos])
    out[~pos] = ex / (1.0 + ex)
    if scalar:
        return float(out[0])
    return out.reshape(arr.shape)


def region_softmax(region_embed, text_embeds, temperature: float) -> np.ndarray:
    """Softmax over cosine similarities between one embedding and C category
    embeddings, sharpened by a temperature.

    Logits are shifted by their maximum before exponentiation so the result
    is overflow-free for any temperature.
    """
    if temperature <= 0.0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    e = as_vector(region_embed)
    rows = np.asarray(text_embeds, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != e.shape[0]:
        raise DimensionMismatchError(
            f"embedding dim {e.shape[0]} does not match table shape {rows.shape}"
        )
    norm = float(np.linalg.norm(e))
    if norm == 0.0:
        raise DegenerateVectorError("region embedding has zero norm")
    logits = (row_normalize(rows) @ (e / norm)) / temperature
    logits -= logits.max()
    w = np.exp(logits)
    return w / w.sum()
