"""Image-level multi-label recognition and context-aware detection scoring.

The toolkit trains lightweight projection heads over precomputed global
image features, calibrates and ensembles their per-category scores, and
uses the resulting image-level probabilities to refine the sparse scores of
an open-vocabulary object detector. A seeded synthetic benchmark and a full
AP/recall evaluation harness make the whole pipeline runnable on a laptop.
"""

from .errors import (
    BadDtypeError,
    BadMagicError,
    BadVersionError,
    DatasetValidationError,
    DegenerateVectorError,
    DimensionMismatchError,
    DimOverflowError,
    EmptyFeatureMapError,
    InvalidConfigError,
    MissingHeadError,
    MissingTeacherEmbeddingError,
    NovelLabelInTrainingError,
    SceneFuseError,
    TensorFileError,
    TooFewCategoriesError,
    TrailingDataError,
    TruncatedPayloadError,
)
from .estimators import TextMlrScorer, VisualMlrScorer
from .evaluation import (
    EvalReport,
    average_precision,
    iou,
    map_report,
    match_detections,
    recall_at_k,
)
from .fusion import (
    branch_probs,
    ensemble_mmlr,
    image_branch_scores,
    preset,
    refine_detections,
    score_image,
)
from .heads import (
    MlrHead,
    branch_scores,
    dist_loss,
    dist_loss_grad,
    global_pool_concat,
    project,
    rank_loss,
    rank_loss_grad,
)
from .mathops import (
    cosine_similarity,
    l2_normalize,
    region_softmax,
    stable_sigmoid,
    zscore_normalize,
)
from .rng import SplitMix64
from .synth import (
    SyntheticWorld,
    WorldConfig,
    generate_dataset,
    generate_in_memory,
    generate_scene,
    generate_world,
    make_vocabulary,
)
from .training import (
    OptimizerState,
    TrainConfig,
    adamw_step,
    finite_diff_check,
    initial_head,
    random_check_instance,
    train_image_head,
    train_text_head,
)
from .types import (
    Category,
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

__version__ = "0.1.0"

__all__ = [
    "BadDtypeError",
    "BadMagicError",
    "BadVersionError",
    "Category",
    "CategoryVocabulary",
    "DatasetValidationError",
    "DegenerateVectorError",
    "DetectionInstance",
    "DetectionSet",
    "DimOverflowError",
    "DimensionMismatchError",
    "EmbeddingVector",
    "EmptyFeatureMapError",
    "EvalReport",
    "FusionConfig",
    "GroundTruthObject",
    "GroundTruthSet",
    "ImageRecord",
    "InvalidConfigError",
    "MissingHeadError",
    "MissingTeacherEmbeddingError",
    "MlrHead",
    "MlrScores",
    "NovelLabelInTrainingError",
    "OptimizerState",
    "SceneFuseError",
    "SplitMix64",
    "SyntheticWorld",
    "TensorFileError",
    "TextMlrScorer",
    "TooFewCategoriesError",
    "TrailingDataError",
    "TrainConfig",
    "TruncatedPayloadError",
    "VisualMlrScorer",
    "WorldConfig",
    "adamw_step",
    "average_precision",
    "branch_probs",
    "branch_scores",
    "cosine_similarity",
    "dist_loss",
    "dist_loss_grad",
    "ensemble_mmlr",
    "finite_diff_check",
    "generate_dataset",
    "generate_in_memory",
    "generate_scene",
    "generate_world",
    "global_pool_concat",
    "image_branch_scores",
    "initial_head",
    "iou",
    "l2_normalize",
    "make_vocabulary",
    "map_report",
    "match_detections",
    "preset",
    "project",
    "random_check_instance",
    "rank_loss",
    "rank_loss_grad",
    "recall_at_k",
    "refine_detections",
    "region_softmax",
    "score_image",
    "stable_sigmoid",
    "train_image_head",
    "train_text_head",
    "zscore_normalize",
]
