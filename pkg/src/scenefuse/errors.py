"""Exception hierarchy shared by every scenefuse module."""


class SceneFuseError(Exception):
    """Base class for all package-specific errors."""


class DegenerateVectorError(SceneFuseError):
    """A zero-norm vector was passed where a direction is required."""


class DimensionMismatchError(SceneFuseError):
    """Operands have incompatible shapes."""


class TooFewCategoriesError(SceneFuseError):
    """Per-image score normalization needs at least two categories."""


class EmptyFeatureMapError(SceneFuseError):
    """A feature map with no spatial elements cannot be pooled."""


class InvalidConfigError(SceneFuseError):
    """A configuration value is outside its documented range."""


class NovelLabelInTrainingError(SceneFuseError):
    """A training record carries a label from the novel split."""


class MissingTeacherEmbeddingError(SceneFuseError):
    """The operation needs a teacher embedding the record does not have."""


class MissingHeadError(SceneFuseError):
    """The operation needs a trained projection head."""


class DatasetValidationError(SceneFuseError):
    """On-disk dataset artifacts failed validation."""


class TensorFileError(SceneFuseError):
    """Base class for binary tensor file violations."""


class BadMagicError(TensorFileError):
    """The file does not start with the expected magic bytes."""


class BadVersionError(TensorFileError):
    """The file declares an unsupported format version."""


class BadDtypeError(TensorFileError):
    """The file declares an unknown element type."""


class TruncatedPayloadError(TensorFileError):
    """The payload is shorter than the declared dimensions require."""


class TrailingDataError(TensorFileError):
    """The file has bytes left over after the declared payload."""


class DimOverflowError(TensorFileError):
    """Declared dimensions overflow or exceed sane bounds."""
