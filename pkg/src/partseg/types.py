"""Core domain types for partially labelled segmentation data.

A sample couples a grayscale image with an integer label map and a
per-class presence vector recording which foreground classes its ground
truth actually annotates. Background is always class 0 and is never
"missing": presence applies to foreground classes only.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

DEFAULT_CLASS_NAMES: tuple[str, ...] = ("LV", "LVM", "LA")


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ClassVocabulary:
    """Ordered foreground class names; background is implicit index 0.

    Label-map integers therefore lie in [0, K] where K = len(names).
    """

    names: tuple[str, ...] = DEFAULT_CLASS_NAMES

    def __post_init__(self) -> None:
        names = tuple(self.names)
        if not names:
            raise ValueError("vocabulary needs at least one foreground class")
        if any(not n for n in names):
            raise ValueError("class names must be non-empty strings")
        if len(set(names)) != len(names):
            raise ValueError(f"class names must be unique, got {names}")
        object.__setattr__(self, "names", names)

    @property
    def K(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> int:
        return self.names.index(name)

    def label_value(self, class_index: int) -> int:
        """Label-map integer for foreground class `class_index`."""
        if not 0 <= class_index < self.K:
            raise ValueError(f"class index {class_index} outside [0, {self.K - 1}]")
        return class_index + 1


def presence_vector(flags: Iterable[bool]) -> np.ndarray:
    """Normalize presence flags to a read-only boolean vector."""
    out = np.asarray(list(flags), dtype=bool)
    if out.ndim != 1:
        raise ValueError("presence flags must be one-dimensional")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SegmentationSample:
    """One training/evaluation unit.

    image    H x W float32 intensities in [0, 1], single channel
    labels   H x W uint8 class indices in [0, K]
    presence (K,) bool, presence[c] means class c+1 is annotated here
    """

    image: np.ndarray
    labels: np.ndarray
    presence: np.ndarray
    domain_id: str
    sample_id: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "image", _readonly(np.asarray(self.image, dtype=np.float32)))
        object.__setattr__(self, "labels", _readonly(np.asarray(self.labels, dtype=np.uint8)))
        object.__setattr__(self, "presence", _readonly(np.asarray(self.presence, dtype=bool)))

    @property
    def size(self) -> int:
        return int(self.image.shape[0])

    def content_digest(self) -> str:
        """SHA-256 over pixel data, presence and identity; used for
        dataset fingerprints and split-disjointness checks."""
        h = hashlib.sha256()
        h.update(self.domain_id.encode())
        h.update(b"\x00")
        h.update(self.sample_id.encode())
        h.update(b"\x00")
        h.update(self.image.tobytes())
        h.update(self.labels.tobytes())
        h.update(self.presence.tobytes())
        return h.hexdigest()


def erase_class(sample: SegmentationSample, class_index: int) -> SegmentationSample:
    """Copy of `sample` with foreground class `class_index` set to background
    and its presence flag cleared. The input sample is never mutated."""
    if not 0 <= class_index < sample.presence.shape[0]:
        raise ValueError(f"class index {class_index} outside presence vector")
    labels = sample.labels.copy()
    labels[labels == class_index + 1] = 0
    presence = sample.presence.copy()
    presence[class_index] = False
    return replace(sample, labels=labels, presence=presence)


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_sample(sample: SegmentationSample, vocab: ClassVocabulary) -> ValidationResult:
    """Check every sample invariant; violations are returned as data,
    never raised."""
    v: list[str] = []
    img, lab = sample.image, sample.labels
    if img.ndim != 2 or lab.ndim != 2:
        v.append("image and labels must be 2-D grids")
        return ValidationResult(tuple(v))
    if img.shape != lab.shape:
        v.append(f"shape mismatch: image {img.shape} vs labels {lab.shape}")
    h, w = img.shape
    if h != w:
        v.append(f"image must be square, got {h}x{w}")
    if not (is_power_of_two(h) and is_power_of_two(w)):
        v.append(f"image side must be a power of two, got {h}x{w}")
    if img.size and (not np.isfinite(img).all() or float(img.min()) < 0.0 or float(img.max()) > 1.0):
        v.append("image intensities must be finite and lie in [0, 1]")
    if sample.presence.shape != (vocab.K,):
        v.append(f"presence has length {sample.presence.shape[0]}, vocabulary has K={vocab.K}")
        return ValidationResult(tuple(v))
    if lab.size and int(lab.max()) > vocab.K:
        v.append(f"label values must lie in [0, {vocab.K}], found {int(lab.max())}")
    for c in range(vocab.K):
        if not sample.presence[c] and bool((lab == c + 1).any()):
            v.append(f"label {c + 1} ({vocab.names[c]}) present but presence flag false")
    return ValidationResult(tuple(v))
