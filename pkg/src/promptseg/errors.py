"""Exception types shared across the package."""


class PromptsegError(Exception):
    """Base class for all package errors."""


# --- exchange formats ---

class MissingKeyError(PromptsegError):
    """A required array key is absent from a bundle container."""

    def __init__(self, name: str):
        super().__init__(f"bundle is missing required key {name!r}")
        self.name = name


class ShapeMismatchError(PromptsegError):
    """Arrays that must share a shape do not."""


class UnsupportedDtypeError(PromptsegError):
    """An array has a dtype outside the format contract."""


class NegativeLabelError(PromptsegError):
    """A label map contains negative values."""


class UnsupportedFormatError(PromptsegError):
    """File content or extension outside the supported formats."""


class LabelOverflowError(PromptsegError):
    """A label exceeds the 16-bit range of the png16 format."""


class ManifestError(PromptsegError):
    """Manifest fails validation (duplicate ids, missing files, bad schema)."""


# --- geometry ---

class SeedOutsideRegionError(PromptsegError):
    """Watershed seeds must be nonzero only inside the flooding region."""


class MalformedRleError(PromptsegError):
    """Run-length data inconsistent with the target raster size."""


# --- metrics ---

class ThresholdBelowHalfError(PromptsegError):
    """IoU matching is only defined for thresholds >= 0.5."""


class EmptyGroupError(PromptsegError):
    """An aggregation group contains no rows."""


class MissingCellError(PromptsegError):
    """A method x dataset matrix has a hole where a score is required."""


# --- stats ---

class AllZeroDiffsError(PromptsegError):
    """Signed-rank test needs at least one nonzero difference."""


# --- mask backends ---

class BackendUnavailableError(PromptsegError):
    """The requested predictor backend cannot be constructed."""


class EmbeddingMissingError(PromptsegError):
    """External backend requires a bundle with a stored embedding."""


class GraphLoadError(PromptsegError):
    """The serialized decoder graph could not be loaded."""


class GraphSignatureMismatchError(PromptsegError):
    """Loaded decoder graph has the wrong input/output arity or dtypes."""


# --- batch runner ---

class MissingPredictionError(PromptsegError):
    """Evaluation found no prediction file for a ground-truth item."""

    def __init__(self, image_id: str):
        super().__init__(f"no prediction found for image {image_id!r}")
        self.image_id = image_id


# --- phantom generator ---

class PlacementFailureError(PromptsegError):
    """Object placement failed after bounded retries (image too crowded)."""
