"""Synthetic multi-domain cone datasets, label removal, augmentation, splits.

Each domain renders sector-shaped scans: a bright fan on a dark frame
containing three foreground structures — a blood-pool ellipse (class 1),
the muscular ring wrapped around it (class 2), and a second chamber below
(class 3). Domains differ in cone geometry, intensity profile and noise
signature, and in which classes their ground truth annotates, so a corpus
combining several domains is partially labelled in a domain-correlated way.

The module also defines the on-disk ingestion format used to feed real,
already cone-cropped data through the same pipeline.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image
from scipy.ndimage import affine_transform, gaussian_filter

from .types import (
    ClassVocabulary,
    SegmentationSample,
    erase_class,
    is_power_of_two,
    validate_sample,
)

_AUG_KEY = 0x617567
_SPLIT_KEY = 0x73706C74
_REMOVE_KEY = 0x726D


def _domain_key(domain_id: str) -> int:
    return zlib.crc32(domain_id.encode())


def _check_interval(name: str, lo: float, hi: float) -> None:
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
        raise ValueError(f"{name} must be a non-empty interval, got ({lo}, {hi})")


@dataclass(frozen=True)
class IntensityProfile:
    """Mean in-cone background intensity, additive per-structure offsets
    (blood pool, ring, lower chamber) and a contrast multiplier on them."""

    background: float = 0.35
    structure_offsets: tuple[float, float, float] = (-0.16, 0.26, -0.12)
    contrast: float = 1.0


@dataclass(frozen=True)
class StructureSizeRanges:
    """Relative size intervals: `pool` and `chamber` are semi-axis fractions
    of the image side, `ring` is the outer/inner radius ratio of the ring."""

    pool: tuple[float, float] = (0.10, 0.14)
    ring: tuple[float, float] = (1.30, 1.50)
    chamber: tuple[float, float] = (0.07, 0.11)


@dataclass(frozen=True)
class DomainSpec:
    """Parametric recipe for one synthetic dataset."""

    domain_id: str
    cone_angle_range: tuple[float, float] = (68.0, 80.0)
    cone_apex_jitter: float = 0.02
    structure_size_ranges: StructureSizeRanges = StructureSizeRanges()
    intensity_profile: IntensityProfile = IntensityProfile()
    noise_sigma: float = 0.03
    speckle_strength: float = 0.10
    labels_present: tuple[bool, bool, bool] = (True, True, True)
    image_size: int = 64

    def __post_init__(self) -> None:
        if not self.domain_id:
            raise ValueError("domain_id must be non-empty")
        _check_interval("cone_angle_range", *self.cone_angle_range)
        sz = self.structure_size_ranges
        _check_interval("pool size range", *sz.pool)
        _check_interval("ring ratio range", *sz.ring)
        _check_interval("chamber size range", *sz.chamber)
        if sz.ring[0] <= 1.0:
            raise ValueError("ring ratio must exceed 1 so the ring surrounds the pool")
        if not any(self.labels_present):
            raise ValueError("a domain must annotate at least one class")


def generate_sample(spec: DomainSpec, seed: int) -> SegmentationSample:
    """Render one cone image containing all three structures, then erase the
    label values of classes this domain does not annotate.

    Deterministic in (spec, seed): same inputs give bit-identical samples.
    Pixels outside the cone are exactly 0.
    """
    s = spec.image_size
    if not is_power_of_two(s):
        raise ValueError(f"image_size must be a power of two, got {s}")
    rng = np.random.default_rng((_domain_key(spec.domain_id), int(seed)))

    half = math.radians(rng.uniform(*spec.cone_angle_range)) / 2.0
    apex_x = s / 2.0 + rng.uniform(-spec.cone_apex_jitter, spec.cone_apex_jitter) * s
    apex_y = 0.03 * s
    depth = 0.92 * s

    yy, xx = np.mgrid[0:s, 0:s].astype(np.float64)
    dy = yy - apex_y
    dx = xx - apex_x
    cone = (dy >= 0) & (np.abs(np.arctan2(dx, dy)) <= half) & (np.hypot(dx, dy) <= depth)

    def ellipse(cx: float, cy: float, rx: float, ry: float) -> np.ndarray:
        return ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0

    sz = spec.structure_size_ranges
    ring_ratio = rng.uniform(*sz.ring)
    pool_rx = rng.uniform(*sz.pool) * s
    pool_cy = apex_y + rng.uniform(0.38, 0.46) * depth
    # keep the outer ring comfortably inside the fan at the pool's depth
    half_width = math.tan(half) * (pool_cy - apex_y)
    pool_rx = min(pool_rx, 0.78 * half_width / ring_ratio)
    pool_ry = pool_rx * rng.uniform(1.15, 1.40)
    pool_cx = apex_x + rng.uniform(-0.04, 0.04) * s

    pool = ellipse(pool_cx, pool_cy, pool_rx, pool_ry)
    outer = ellipse(pool_cx, pool_cy, pool_rx * ring_ratio, pool_ry * ring_ratio)
    ring = outer & ~pool

    cham_rx = rng.uniform(*sz.chamber) * s
    cham_ry = cham_rx * rng.uniform(0.9, 1.2)
    gap = 0.02 * s + 1.0
    ring_bottom = pool_cy + pool_ry * ring_ratio
    room = apex_y + 0.97 * depth - ring_bottom - gap
    if room < 3.0:
        raise RuntimeError(f"domain {spec.domain_id!r}: no room below the ring for the chamber")
    cham_ry = min(cham_ry, room / 2.0)
    cham_cy = ring_bottom + gap + cham_ry
    cham_cx = pool_cx + rng.uniform(-0.03, 0.03) * s
    chamber = ellipse(cham_cx, cham_cy, cham_rx, cham_ry) & ~outer

    pool &= cone
    ring &= cone
    chamber &= cone
    if not (pool.any() and ring.any() and chamber.any()):
        raise RuntimeError(f"domain {spec.domain_id!r}: degenerate geometry at seed {seed}")

    labels = np.zeros((s, s), dtype=np.uint8)
    labels[ring] = 2
    labels[pool] = 1
    labels[chamber] = 3

    prof = spec.intensity_profile
    img = np.zeros((s, s), dtype=np.float64)
    img[cone] = prof.background
    for cls, mask in enumerate((pool, ring, chamber)):
        img[mask] = prof.background + prof.structure_offsets[cls] * prof.contrast
    img = gaussian_filter(img, sigma=max(0.5, 0.011 * s))
    img *= 1.0 + spec.speckle_strength * rng.standard_normal((s, s))
    img += rng.normal(0.0, spec.noise_sigma, (s, s))
    np.clip(img, 0.0, 1.0, out=img)
    img[~cone] = 0.0

    presence = np.asarray(spec.labels_present, dtype=bool).copy()
    for c in range(3):
        if not presence[c]:
            labels[labels == c + 1] = 0

    return SegmentationSample(
        image=img.astype(np.float32),
        labels=labels,
        presence=presence,
        domain_id=spec.domain_id,
        sample_id=f"{spec.domain_id}-{int(seed):08x}",
    )


def generate_domain_dataset(spec: DomainSpec, n: int, seed: int) -> list[SegmentationSample]:
    """n samples with per-sample seeds derived from the master seed and
    index-based unique sample ids."""
    if n <= 0:
        raise ValueError(f"n must be >= 1, got {n}")
    child_seeds = np.random.SeedSequence(int(seed)).generate_state(n, np.uint64)
    out = []
    for i in range(n):
        sample = generate_sample(spec, int(child_seeds[i]))
        out.append(replace(sample, sample_id=f"{spec.domain_id}-{i:05d}"))
    return out


def apply_label_removal(
    samples: Sequence[SegmentationSample], class_index: int, fraction: float, seed: int
) -> list[SegmentationSample]:
    """Erase foreground class `class_index` from a uniformly random subset of
    floor(fraction * n) samples; the rest are returned untouched."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    samples = list(samples)
    if samples and not 0 <= class_index < samples[0].presence.shape[0]:
        raise ValueError(f"class index {class_index} outside presence vector")
    count = int(math.floor(fraction * len(samples)))
    if count == 0:
        return samples
    rng = np.random.default_rng((_REMOVE_KEY, int(seed)))
    chosen = set(rng.choice(len(samples), size=count, replace=False).tolist())
    return [erase_class(s, class_index) if i in chosen else s for i, s in enumerate(samples)]


@dataclass(frozen=True)
class AugmentConfig:
    """On-the-fly augmentation ranges; each transform fires independently
    with `apply_probability`."""

    scale_range: tuple[float, float] = (0.85, 1.15)
    rotation_range: tuple[float, float] = (-15.0, 15.0)
    blur_sigma_range: tuple[float, float] = (0.0, 1.5)
    brightness_range: tuple[float, float] = (-0.1, 0.1)
    contrast_range: tuple[float, float] = (0.8, 1.2)
    apply_probability: float = 0.5

    def __post_init__(self) -> None:
        for name in ("scale_range", "rotation_range", "blur_sigma_range", "brightness_range", "contrast_range"):
            _check_interval(name, *getattr(self, name))
        if not 0.0 <= self.apply_probability <= 1.0:
            raise ValueError(f"apply_probability must be in [0, 1], got {self.apply_probability}")


def _affine_pair(img: np.ndarray, lab: np.ndarray, scale: float, angle_deg: float) -> tuple[np.ndarray, np.ndarray]:
    """Apply the same scale+rotation about the image center to image
    (bilinear) and labels (nearest); out-of-support pixels become 0."""
    h, w = img.shape
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    t = math.radians(angle_deg)
    rot = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    matrix = rot / scale  # output -> input mapping
    offset = center - matrix @ center
    img_out = affine_transform(img.astype(np.float64), matrix, offset=offset, order=1, mode="constant", cval=0.0)
    lab_out = affine_transform(lab, matrix, offset=offset, order=0, mode="constant", cval=0)
    return img_out.astype(np.float32), lab_out


def augment(sample: SegmentationSample, cfg: AugmentConfig, seed: int) -> SegmentationSample:
    """Random scale/rotation applied identically to image and labels, then
    blur/brightness/contrast on the image alone. Deterministic in seed;
    presence, ids and the input sample itself are untouched."""
    rng = np.random.default_rng((_AUG_KEY, int(seed)))
    p = cfg.apply_probability
    scale = float(rng.uniform(*cfg.scale_range)) if rng.random() < p else 1.0
    angle = float(rng.uniform(*cfg.rotation_range)) if rng.random() < p else 0.0

    img = np.asarray(sample.image, dtype=np.float32)
    lab = sample.labels
    if scale != 1.0 or angle != 0.0:
        img, lab = _affine_pair(img, lab, scale, angle)
    if rng.random() < p:
        sigma = float(rng.uniform(*cfg.blur_sigma_range))
        if sigma > 0:
            img = gaussian_filter(img, sigma=sigma)
    if rng.random() < p:
        img = img + float(rng.uniform(*cfg.brightness_range))
    if rng.random() < p:
        c = float(rng.uniform(*cfg.contrast_range))
        m = float(img.mean())
        img = m + (img - m) * c
    img = np.clip(img, 0.0, 1.0).astype(np.float32)
    return replace(sample, image=img, labels=lab)


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self) -> None:
        if any(f <= 0 for f in self.fractions):
            raise ValueError(f"all split fractions must be > 0, got {self.fractions}")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {self.fractions}")


def split_dataset(
    samples: Sequence[SegmentationSample], spec: SplitSpec = SplitSpec()
) -> tuple[list[SegmentationSample], list[SegmentationSample], list[SegmentationSample]]:
    """Disjoint (train, val, test) partition with sizes
    floor(f_train*n) / floor(f_val*n) / rest, assignment seeded by spec."""
    n = len(samples)
    if n < 3:
        raise ValueError(f"need at least 3 samples to split, got {n}")
    order = np.random.default_rng((_SPLIT_KEY, int(spec.seed))).permutation(n)
    n_train = int(math.floor(spec.fractions[0] * n))
    n_val = int(math.floor(spec.fractions[1] * n))
    train = [samples[i] for i in order[:n_train]]
    val = [samples[i] for i in order[n_train : n_train + n_val]]
    test = [samples[i] for i in order[n_train + n_val :]]
    return train, val, test


# --- built-in domain presets -------------------------------------------------

PRESET_NAMES = ("camus_like", "unity_like", "echonet_like")


def preset_domain(name: str, image_size: int = 64) -> DomainSpec:
    """Built-in domain recipes.

    camus_like   wide fan, high contrast, all three classes annotated
    unity_like   narrower clean low-noise fan overlapping camus_like at one
                 end, all classes annotated
    echonet_like wide bright fan, low contrast, heavy speckle, pool-only labels
    """
    if name == "camus_like":
        return DomainSpec(
            domain_id="camus_like",
            cone_angle_range=(68.0, 80.0),
            cone_apex_jitter=0.02,
            intensity_profile=IntensityProfile(0.34, (-0.16, 0.26, -0.12), 1.0),
            noise_sigma=0.03,
            speckle_strength=0.10,
            labels_present=(True, True, True),
            image_size=image_size,
        )
    if name == "unity_like":
        return DomainSpec(
            domain_id="unity_like",
            cone_angle_range=(58.0, 72.0),
            cone_apex_jitter=0.02,
            intensity_profile=IntensityProfile(0.30, (-0.16, 0.26, -0.12), 1.0),
            noise_sigma=0.018,
            speckle_strength=0.05,
            labels_present=(True, True, True),
            image_size=image_size,
        )
    if name == "echonet_like":
        return DomainSpec(
            domain_id="echonet_like",
            cone_angle_range=(72.0, 86.0),
            cone_apex_jitter=0.03,
            intensity_profile=IntensityProfile(0.46, (-0.11, 0.15, -0.09), 0.65),
            noise_sigma=0.05,
            speckle_strength=0.22,
            labels_present=(True, False, False),
            image_size=image_size,
        )
    raise ValueError(f"unknown preset {name!r}, choose from {PRESET_NAMES}")


# --- on-disk ingestion format -------------------------------------------------
#
# One directory per domain:
#   images/<id>.png    8-bit grayscale
#   labels/<id>.png    8-bit, pixel value = class index
#   manifest.json      {"domain_id", "class_names", "samples": [{"id", "presence"}]}


def save_dataset(samples: Sequence[SegmentationSample], root: str | Path, vocab: ClassVocabulary) -> None:
    """Write one domain's samples in the ingestion layout (8-bit images)."""
    samples = list(samples)
    if not samples:
        raise ValueError("cannot save an empty dataset")
    domains = {s.domain_id for s in samples}
    if len(domains) != 1:
        raise ValueError(f"one directory holds one domain, got {sorted(domains)}")
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "labels").mkdir(parents=True, exist_ok=True)
    manifest = {
        "domain_id": samples[0].domain_id,
        "class_names": list(vocab.names),
        "samples": [{"id": s.sample_id, "presence": [bool(x) for x in s.presence]} for s in samples],
    }
    for s in samples:
        img8 = np.round(s.image * 255.0).astype(np.uint8)
        Image.fromarray(img8, mode="L").save(root / "images" / f"{s.sample_id}.png")
        Image.fromarray(s.labels, mode="L").save(root / "labels" / f"{s.sample_id}.png")
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_dataset(root: str | Path, vocab: ClassVocabulary) -> list[SegmentationSample]:
    """Load one domain directory, validating every sample against `vocab`."""
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise ValueError(f"no manifest.json under {root}")
    manifest = json.loads(manifest_path.read_text())
    names = tuple(manifest.get("class_names", ()))
    if names != vocab.names:
        raise ValueError(f"manifest class names {names} do not match vocabulary {vocab.names}")
    domain_id = manifest["domain_id"]
    out = []
    problems = []
    for entry in manifest["samples"]:
        sid = entry["id"]
        img = np.asarray(Image.open(root / "images" / f"{sid}.png"), dtype=np.float32) / 255.0
        lab = np.asarray(Image.open(root / "labels" / f"{sid}.png"), dtype=np.uint8)
        sample = SegmentationSample(
            image=img, labels=lab, presence=np.asarray(entry["presence"], dtype=bool),
            domain_id=domain_id, sample_id=sid,
        )
        result = validate_sample(sample, vocab)
        if not result.ok:
            problems.append(f"{sid}: {'; '.join(result.violations)}")
        out.append(sample)
    if problems:
        raise ValueError("invalid samples in " + str(root) + ":\n" + "\n".join(problems))
    return out
