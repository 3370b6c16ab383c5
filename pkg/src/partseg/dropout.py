"""Label dropout: an on-the-fly training transform that randomly erases one
eligible label per sample presentation.

With a configured probability, one class is chosen uniformly from the
eligible set (configured partially-labelled classes that this sample still
annotates), its pixels are set to background and its presence flag cleared.
Applied fresh every epoch to the pristine sample, this breaks any
correlation between a domain's appearance and which labels it carries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .seeding import DROPOUT_STREAM, presentation_rng
from .types import SegmentationSample, erase_class

__all__ = ["DropoutConfig", "eligible_for", "apply_label_dropout", "presentation_rng", "DROPOUT_STREAM"]


@dataclass(frozen=True)
class DropoutConfig:
    """probability: chance that a dropout event occurs for one presentation.
    eligible_classes: foreground class indices that are partially labelled
    across the combined training corpus (the only classes worth dropping)."""

    probability: float
    eligible_classes: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"probability must be in [0, 1], got {self.probability}")
        classes = frozenset(int(c) for c in self.eligible_classes)
        if any(c < 0 for c in classes):
            raise ValueError(f"eligible classes must be non-negative, got {sorted(classes)}")
        object.__setattr__(self, "eligible_classes", classes)


def eligible_for(sample: SegmentationSample, cfg: DropoutConfig) -> frozenset[int]:
    """Classes that may be dropped from this sample: the configured eligible
    set intersected with the classes the sample still annotates."""
    k = sample.presence.shape[0]
    if any(c >= k for c in cfg.eligible_classes):
        raise ValueError(f"eligible classes {sorted(cfg.eligible_classes)} exceed K={k}")
    return frozenset(c for c in cfg.eligible_classes if sample.presence[c])


def apply_label_dropout(
    sample: SegmentationSample, cfg: DropoutConfig, rng: np.random.Generator
) -> SegmentationSample:
    """With probability cfg.probability, erase exactly one class chosen
    uniformly from the sample's eligible set; otherwise return the sample
    unchanged. Never mutates the input."""
    eligible = sorted(eligible_for(sample, cfg))
    if not eligible or cfg.probability == 0.0:
        return sample
    if rng.random() >= cfg.probability:
        return sample
    chosen = eligible[int(rng.integers(len(eligible)))]
    return erase_class(sample, chosen)


def partially_labelled_classes(samples) -> frozenset[int]:
    """Corpus-level eligible set: classes missing from at least one sample."""
    out: set[int] = set()
    for s in samples:
        for c in range(s.presence.shape[0]):
            if not s.presence[c]:
                out.add(c)
    return frozenset(out)
