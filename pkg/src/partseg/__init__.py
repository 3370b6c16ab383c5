"""partseg: training segmentation models on partially labelled multi-domain
data, with presence-aware losses and label dropout."""

__version__ = "0.1.0"

from .types import (  # noqa: F401
    ClassVocabulary,
    SegmentationSample,
    ValidationResult,
    erase_class,
    presence_vector,
    validate_sample,
)
