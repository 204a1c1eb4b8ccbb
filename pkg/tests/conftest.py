import numpy as np
import pytest

from scenefuse import Category, CategoryVocabulary, EmbeddingVector, ImageRecord
from scenefuse.rng import SplitMix64


@pytest.fixture
def small_vocab() -> CategoryVocabulary:
    """Four categories: ids 0-1 base, 2-3 novel."""
    return CategoryVocabulary(
        [
            Category(id=0, name="mug", split="base"),
            Category(id=1, name="desk", split="base"),
            Category(id=2, name="stapler", split="novel"),
            Category(id=3, name="fern", split="novel"),
        ]
    )


@pytest.fixture
def grouped_vocab() -> CategoryVocabulary:
    return CategoryVocabulary(
        [
            Category(id=0, name="mug", split="base", group="frequent"),
            Category(id=1, name="desk", split="base", group="common"),
            Category(id=2, name="stapler", split="novel", group="rare"),
            Category(id=3, name="fern", split="novel", group="rare"),
        ]
    )


def make_record(image_id="img_0", feature=(1.0, 0.0), teacher=None, labels=()):
    return ImageRecord(
        image_id=image_id,
        global_feature=EmbeddingVector(np.asarray(feature, dtype=float)),
        teacher_embedding=(
            EmbeddingVector(np.asarray(teacher, dtype=float)) if teacher is not None else None
        ),
        labels=frozenset(labels),
    )


def separable_dataset(
    n_base: int = 30,
    n_novel: int = 2,
    embed_dim: int = 32,
    global_dim: int = 64,
    n_images: int = 200,
    max_labels: int = 4,
    seed: int = 0,
):
    """Noiseless, linearly separable toy world.

    Base prototypes are orthonormal axes; each image's global feature is a
    fixed random lift of the normalized sum of its label prototypes.
    """
    assert n_base + n_novel <= embed_dim
    rng = SplitMix64(seed)
    prototypes = np.eye(embed_dim)[: n_base + n_novel]
    lift = np.stack(
        [rng.normal_vector(embed_dim) for _ in range(global_dim)]
    ) / np.sqrt(embed_dim)
    cats = [
        Category(id=i, name=f"cat_{i:03d}", split="base" if i < n_base else "novel")
        for i in range(n_base + n_novel)
    ]
    vocab = CategoryVocabulary(cats)
    records = []
    for i in range(n_images):
        count = 1 + rng.randint(max_labels)
        labels = sorted(int(c) for c in rng.permutation(n_base)[:count])
        target = prototypes[labels].sum(axis=0)
        target /= np.linalg.norm(target)
        records.append(
            ImageRecord(
                image_id=f"img_{i:04d}",
                global_feature=EmbeddingVector(lift @ target),
                teacher_embedding=EmbeddingVector(target, unit=True),
                labels=frozenset(labels),
            )
        )
    return vocab, prototypes, records
