"""Seeded synthetic benchmark generator.

The generator builds a world of unit category prototypes grouped under
latent scene themes. Each scene draws a theme, samples co-occurring object
categories from it, and emits three aligned views:

* ground truth: the placed boxes and their categories;
* a simulated detector: the same boxes scored by a temperature softmax over
  prototype cosines, where "hard" objects carry extra embedding noise and
  are therefore frequently mis-scored;
* image-level context: a teacher embedding near the mean of the present
  prototypes plus the theme vector, and a lifted global feature derived
  from it.

Hard objects degrade only the regional evidence; the image-level context
remains informative, which is exactly the gap score refinement closes.

Determinism: every sample derives from ``WorldConfig.seed`` through
splitmix64 streams. The world stream uses the seed itself; scene ``i``
(1-based across train then test) uses ``seed XOR i``. Indices start at 1 so
no scene stream collides with the world stream. Generated embeddings are
rounded to 32-bit floats, the precision of the on-disk tensor format, so
in-memory and file-loaded pipelines see identical values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .errors import InvalidConfigError
from .mathops import region_softmax
from .rng import SplitMix64
from .types import (
    Category,
    CategoryVocabulary,
    DetectionInstance,
    DetectionSet,
    EmbeddingVector,
    GroundTruthObject,
    GroundTruthSet,
    ImageRecord,
)

SCENE_WIDTH = 640.0
SCENE_HEIGHT = 480.0
_THEME_CORE_WEIGHT = 24.0


@dataclass(frozen=True)
class WorldConfig:
    n_categories: int = 40
    n_base: int = 30
    n_themes: int = 5
    embed_dim: int = 32
    global_dim: int = 64
    images_train: int = 500
    images_test: int = 200
    objects_per_image: tuple[int, int] = (3, 8)
    hard_fraction: float = 0.3
    regional_noise: float = 0.4
    hard_noise_multiplier: float = 7.0
    global_noise: float = 0.1
    temperature: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.n_base < self.n_categories:
            raise InvalidConfigError("need 0 < n_base < n_categories")
        if min(self.n_themes, self.embed_dim, self.global_dim) < 1:
            raise InvalidConfigError("theme count and dimensions must be positive")
        if self.images_train < 0 or self.images_test < 0:
            raise InvalidConfigError("image counts must be non-negative")
        lo, hi = self.objects_per_image
        if not 1 <= lo <= hi:
            raise InvalidConfigError("objects_per_image range must satisfy 1 <= lo <= hi")
        if not 0.0 <= self.hard_fraction <= 1.0:
            raise InvalidConfigError("hard_fraction must lie in [0, 1]")
        if self.regional_noise < 0 or self.global_noise < 0:
            raise InvalidConfigError("noise levels must be non-negative")
        if self.hard_noise_multiplier <= 1.0:
            raise InvalidConfigError("hard_noise_multiplier must exceed 1")
        if self.temperature <= 0:
            raise InvalidConfigError("temperature must be positive")
        object.__setattr__(self, "objects_per_image", tuple(self.objects_per_image))

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["objects_per_image"] = list(self.objects_per_image)
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "WorldConfig":
        data = dict(payload)
        if "objects_per_image" in data:
            data["objects_per_image"] = tuple(data["objects_per_image"])
        return cls(**data)


@dataclass(frozen=True)
class SyntheticWorld:
    """Frozen sampling structure every scene draws from."""

    prototypes: np.ndarray  # (C, d) unit rows, float32-rounded
    theme_vectors: np.ndarray  # (n_themes, d) unit rows
    theme_table: np.ndarray  # (n_themes, C) rows sum to 1
    lifting: np.ndarray  # (D, d)
    config: WorldConfig

    def __post_init__(self) -> None:
        for name in ("prototypes", "theme_vectors", "theme_table", "lifting"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def theme_cumulative(self) -> np.ndarray:
        return np.cumsum(self.theme_table, axis=1)


def make_vocabulary(cfg: WorldConfig) -> CategoryVocabulary:
    """Categories cat_000..cat_C-1; ids below n_base are the base split."""
    cats = []
    for cid in range(cfg.n_categories):
        split = "base" if cid < cfg.n_base else "novel"
        cats.append(Category(id=cid, name=f"cat_{cid:03d}", split=split))
    return CategoryVocabulary(cats)


def _f32(arr: np.ndarray) -> np.ndarray:
    # Round to the storage precision of the tensor file format.
    return arr.astype(np.float32).astype(np.float64)


def _unit_noise(rng: SplitMix64, dim: int, scale: float) -> np.ndarray:
    # Gaussian direction with expected squared norm == scale**2.
    return scale * rng.normal_vector(dim) / np.sqrt(dim)


def generate_world(cfg: WorldConfig) -> SyntheticWorld:
    """Sample prototypes, themes, co-occurrence table, and the lifting map.

    Themes partition the categories into disjoint "core" groups that receive
    almost all of a scene's draws, and each theme vector is the normalized
    mean of its core prototypes: scene context genuinely points toward the
    categories likely to co-occur under that theme.
    """
    rng = SplitMix64(cfg.seed)
    protos = np.stack([rng.normal_vector(cfg.embed_dim) for _ in range(cfg.n_categories)])
    protos /= np.linalg.norm(protos, axis=1)[:, None]
    protos = _f32(protos)

    assignment = rng.permutation(cfg.n_categories)
    cores = [np.sort(chunk) for chunk in np.array_split(assignment, cfg.n_themes)]
    table = np.ones((cfg.n_themes, cfg.n_categories))
    theme_rows = []
    for k, core in enumerate(cores):
        table[k, core] = _THEME_CORE_WEIGHT
        centroid = protos[core].mean(axis=0)
        theme_rows.append(centroid / np.linalg.norm(centroid))
    table /= table.sum(axis=1)[:, None]
    themes = np.stack(theme_rows)

    lifting = np.stack(
        [rng.normal_vector(cfg.embed_dim) for _ in range(cfg.global_dim)]
    ) / np.sqrt(cfg.embed_dim)
    return SyntheticWorld(
        prototypes=protos,
        theme_vectors=themes,
        theme_table=table,
        lifting=lifting,
        config=cfg,
    )


def _sample_box(rng: SplitMix64) -> tuple[float, float, float, float]:
    w = rng.uniform_in(30.0, 240.0)
    h = rng.uniform_in(30.0, 180.0)
    x1 = rng.uniform_in(0.0, SCENE_WIDTH - w)
    y1 = rng.uniform_in(0.0, SCENE_HEIGHT - h)
    return (x1, y1, x1 + w, y1 + h)


def _generate_scene_ex(
    world: SyntheticWorld,
    cfg: WorldConfig,
    rng: SplitMix64,
    image_id: str,
    top_k: int = 5,
) -> tuple[ImageRecord, GroundTruthSet, DetectionSet, dict]:
    theme_id = rng.randint(cfg.n_themes)
    cumulative = world.theme_cumulative[theme_id]
    lo, hi = cfg.objects_per_image
    n_objects = lo + rng.randint(hi - lo + 1)

    objects = []
    instances = []
    hard_flags = []
    for _ in range(n_objects):
        cid = rng.choice_weighted(cumulative)
        box = _sample_box(rng)
        hard = rng.uniform() < cfg.hard_fraction
        scale = cfg.regional_noise * (cfg.hard_noise_multiplier if hard else 1.0)
        embed = world.prototypes[cid] + _unit_noise(rng, cfg.embed_dim, scale)
        norm = np.linalg.norm(embed)
        if norm == 0.0:  # measure-zero; retry deterministically by nudging
            embed = world.prototypes[cid]
            norm = 1.0
        probs = region_softmax(embed / norm, world.prototypes, cfg.temperature)
        keep = sorted(range(cfg.n_categories), key=lambda c: (-probs[c], c))[:top_k]
        sparse = tuple((c, float(probs[c])) for c in keep)
        objects.append(GroundTruthObject(box=box, category_id=cid))
        instances.append(DetectionInstance(box=box, scores=sparse))
        hard_flags.append(hard)

    present = sorted({obj.category_id for obj in objects})
    context = world.prototypes[present].mean(axis=0) + world.theme_vectors[theme_id]
    context = context + _unit_noise(rng, cfg.embed_dim, cfg.global_noise)
    teacher = context / np.linalg.norm(context)
    teacher = _f32(teacher)

    global_feature = world.lifting @ teacher + _unit_noise(rng, cfg.global_dim, cfg.global_noise)
    global_feature = _f32(global_feature)

    record = ImageRecord(
        image_id=image_id,
        global_feature=EmbeddingVector(global_feature),
        teacher_embedding=EmbeddingVector(teacher, unit=True),
        labels=frozenset(present),
        width=int(SCENE_WIDTH),
        height=int(SCENE_HEIGHT),
    )
    info = {"theme": theme_id, "hard": hard_flags}
    return (
        record,
        GroundTruthSet(image_id=image_id, objects=tuple(objects)),
        DetectionSet(image_id=image_id, instances=tuple(instances)),
        info,
    )


def generate_scene(
    world: SyntheticWorld,
    cfg: WorldConfig,
    rng: SplitMix64,
    image_id: str = "img_000000",
    top_k: int = 5,
) -> tuple[ImageRecord, GroundTruthSet, DetectionSet]:
    record, gt, det, _ = _generate_scene_ex(world, cfg, rng, image_id, top_k)
    return record, gt, det


@dataclass(frozen=True)
class SyntheticSplit:
    records: tuple[ImageRecord, ...]
    ground_truths: tuple[GroundTruthSet, ...]
    detections: tuple[DetectionSet, ...]


@dataclass(frozen=True)
class SyntheticDataset:
    vocab: CategoryVocabulary
    world: SyntheticWorld
    train: SyntheticSplit
    test: SyntheticSplit


def _strip_novel_labels(record: ImageRecord, vocab: CategoryVocabulary) -> ImageRecord:
    kept = frozenset(cid for cid in record.labels if vocab.is_base(cid))
    return ImageRecord(
        image_id=record.image_id,
        global_feature=record.global_feature,
        teacher_embedding=record.teacher_embedding,
        labels=kept,
        width=record.width,
        height=record.height,
    )


def generate_in_memory(cfg: WorldConfig, top_k: int = 5) -> SyntheticDataset:
    """Generate both splits without touching disk.

    Train records keep only base labels (novel supervision never exists at
    training time); test records keep the full label set.
    """
    world = generate_world(cfg)
    vocab = make_vocabulary(cfg)
    splits = []
    index = 1  # 1-based so scene streams never collide with the world stream
    for count, is_train in ((cfg.images_train, True), (cfg.images_test, False)):
        records, gts, dets = [], [], []
        for _ in range(count):
            rng = SplitMix64(cfg.seed ^ index)
            record, gt, det = generate_scene(world, cfg, rng, f"img_{index:06d}", top_k)
            if is_train:
                record = _strip_novel_labels(record, vocab)
            records.append(record)
            gts.append(gt)
            dets.append(det)
            index += 1
        splits.append(
            SyntheticSplit(
                records=tuple(records),
                ground_truths=tuple(gts),
                detections=tuple(dets),
            )
        )
    return SyntheticDataset(vocab=vocab, world=world, train=splits[0], test=splits[1])


def generate_dataset(cfg: WorldConfig, out_dir: str | Path, top_k: int = 5) -> Path:
    """Generate both splits and write them in the on-disk dataset layout.

    Output is byte-identical for equal configs.
    """
    from .datasets import save_dataset

    dataset = generate_in_memory(cfg, top_k)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(
        json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    for name, split in (("train", dataset.train), ("test", dataset.test)):
        save_dataset(
            out / name,
            vocab=dataset.vocab,
            records=split.records,
            detections=split.detections,
            ground_truths=split.ground_truths,
            text_embeds=dataset.world.prototypes,
        )
    return out
