"""Classifier errors."""

from features.extractor import UnknownFeature  # noqa: F401  (re-exported)
from utils.errors import DataError


class AllMissing(DataError):
    """A feature has no non-missing training value to impute from."""

    def __init__(self, feature):
        super().__init__(f'feature {getattr(feature, "value", feature)} is missing in every training slot')
        self.feature = feature


class SingleClass(DataError):
    """Training data holds only one class."""


class WidthMismatch(DataError):
    """Slot width of the input differs from the model's."""


class ModelWidthMismatch(DataError):
    """Models supplied to the unified classifier do not cover the required widths."""


class ModelFormatError(DataError):
    """Persisted model JSON is malformed."""


class TooFewDevices(DataError):
    """Fewer devices than cross-validation folds."""


class DegenerateFold(DataError):
    """A fold's training side holds a single class."""


class EmptyPoolAfterScreening(DataError):
    """No feature passed the single-feature screening threshold."""
