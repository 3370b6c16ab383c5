"""Dice computation, per-domain evaluation reports, cross-domain matrices
and the Wilcoxon signed-rank test used for paired comparisons."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
import torch

from .types import ClassVocabulary, SegmentationSample


def dice(pred_mask: np.ndarray, gt_mask: np.ndarray) -> float:
    """2|A n B| / (|A| + |B|); two empty masks agree perfectly (1.0)."""
    p = np.asarray(pred_mask, dtype=bool)
    g = np.asarray(gt_mask, dtype=bool)
    if p.shape != g.shape:
        raise ValueError(f"mask shape mismatch: {p.shape} vs {g.shape}")
    denom = int(p.sum()) + int(g.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((p & g).sum()) / denom


@dataclass(frozen=True)
class DiceRow:
    sample_id: str
    domain_id: str
    class_name: str
    dice: float


@dataclass(frozen=True)
class MetricsReport:
    """Sample-level Dice table plus aggregation helpers.

    Rows exist only for (sample, class) pairs where the sample's ground
    truth annotates the class, so absent annotations are never penalized.
    """

    class_names: tuple[str, ...]
    rows: tuple[DiceRow, ...]

    def domains(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for r in self.rows:
            seen.setdefault(r.domain_id, None)
        return tuple(seen)

    def values(self, domain_id: Optional[str] = None, class_name: Optional[str] = None) -> np.ndarray:
        out = [
            r.dice
            for r in self.rows
            if (domain_id is None or r.domain_id == domain_id)
            and (class_name is None or r.class_name == class_name)
        ]
        return np.asarray(out, dtype=float)

    def mean_std(self, domain_id: Optional[str] = None, class_name: Optional[str] = None) -> tuple[float, float]:
        vals = self.values(domain_id, class_name)
        if vals.size == 0:
            raise ValueError(f"no rows for domain={domain_id} class={class_name}")
        return float(vals.mean()), float(vals.std())

    def sample_table(self, domain_id: Optional[str] = None, class_name: Optional[str] = None) -> dict[str, float]:
        """sample_id -> Dice, insertion-ordered; for paired tests."""
        out: dict[str, float] = {}
        for r in self.rows:
            if (domain_id is None or r.domain_id == domain_id) and (
                class_name is None or r.class_name == class_name
            ):
                out[r.sample_id] = r.dice
        return out

    def foreground_by_sample(self, domain_id: Optional[str] = None) -> dict[str, float]:
        """sample_id -> mean Dice over that sample's annotated classes."""
        acc: dict[str, list[float]] = {}
        for r in self.rows:
            if domain_id is None or r.domain_id == domain_id:
                acc.setdefault(r.sample_id, []).append(r.dice)
        return {sid: float(np.mean(v)) for sid, v in acc.items()}

    def mean_foreground(self, domain_id: Optional[str] = None) -> float:
        per_sample = self.foreground_by_sample(domain_id)
        if not per_sample:
            raise ValueError(f"no rows for domain={domain_id}")
        return float(np.mean(list(per_sample.values())))

    def counts(self) -> dict[str, int]:
        out: dict[str, set[str]] = {}
        for r in self.rows:
            out.setdefault(r.domain_id, set()).add(r.sample_id)
        return {d: len(ids) for d, ids in out.items()}

    def summary(self) -> dict:
        per_domain: dict[str, dict] = {}
        for d in self.domains():
            entry: dict = {"n_samples": self.counts()[d]}
            for cname in self.class_names:
                if self.values(d, cname).size:
                    m, s = self.mean_std(d, cname)
                    entry[cname] = {"mean": m, "std": s, "n": int(self.values(d, cname).size)}
            entry["mean_foreground"] = self.mean_foreground(d)
            per_domain[d] = entry
        return {"class_names": list(self.class_names), "domains": per_domain}

    def to_csv(self, path: str | Path) -> None:
        """Flat table, one row per sample x class."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample_id", "domain_id", "class_name", "dice"])
            for r in self.rows:
                writer.writerow([r.sample_id, r.domain_id, r.class_name, repr(r.dice)])

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True))

    @classmethod
    def from_csv(cls, path: str | Path, class_names: Sequence[str]) -> "MetricsReport":
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                rows.append(DiceRow(rec["sample_id"], rec["domain_id"], rec["class_name"], float(rec["dice"])))
        return cls(tuple(class_names), tuple(rows))


def predict_labels(model: torch.nn.Module, samples: Sequence[SegmentationSample], batch_size: int = 64) -> list[np.ndarray]:
    """Hard (argmax) label maps for each sample, evaluation mode."""
    model.eval()
    out: list[np.ndarray] = []
    with torch.no_grad():
        for start in range(0, len(samples), batch_size):
            chunk = samples[start : start + batch_size]
            x = torch.from_numpy(np.stack([s.image for s in chunk])[:, None, :, :])
            pred = model(x).argmax(dim=1).cpu().numpy().astype(np.uint8)
            out.extend(pred)
    return out


def evaluate_predictions(
    pred_maps: Sequence[np.ndarray], samples: Sequence[SegmentationSample], vocab: ClassVocabulary
) -> MetricsReport:
    """Per-class Dice for every sample, skipping classes the sample's ground
    truth does not annotate."""
    if not samples:
        raise ValueError("cannot evaluate an empty test set")
    if len(pred_maps) != len(samples):
        raise ValueError(f"{len(pred_maps)} predictions for {len(samples)} samples")
    rows = []
    for pred, s in zip(pred_maps, samples):
        for c in range(vocab.K):
            if s.presence[c]:
                rows.append(
                    DiceRow(s.sample_id, s.domain_id, vocab.names[c], dice(pred == c + 1, s.labels == c + 1))
                )
    return MetricsReport(tuple(vocab.names), tuple(rows))


def evaluate(model: torch.nn.Module, samples: Sequence[SegmentationSample], vocab: ClassVocabulary, batch_size: int = 64) -> MetricsReport:
    return evaluate_predictions(predict_labels(model, samples, batch_size), samples, vocab)


def mean_foreground_dice(pred_maps: Sequence[np.ndarray], samples: Sequence[SegmentationSample]) -> float:
    """Mean over samples of the per-sample mean Dice across annotated
    classes; the validation-selection metric."""
    per_sample = []
    for pred, s in zip(pred_maps, samples):
        vals = [dice(pred == c + 1, s.labels == c + 1) for c in range(s.presence.shape[0]) if s.presence[c]]
        if vals:
            per_sample.append(float(np.mean(vals)))
    return float(np.mean(per_sample)) if per_sample else 0.0


def cross_domain_matrix(
    models: Mapping[str, torch.nn.Module],
    test_sets: Mapping[str, Sequence[SegmentationSample]],
    vocab: ClassVocabulary,
    class_name: Optional[str] = None,
) -> tuple[np.ndarray, tuple[str, ...]]:
    """Entry (i, j): mean Dice of `class_name` (default: first foreground
    class) for the model trained on domain i, evaluated on domain j."""
    domains = tuple(models.keys())
    if not domains:
        raise ValueError("no models given")
    missing = [d for d in domains if d not in test_sets]
    if missing:
        raise ValueError(f"missing test sets for domains {missing}")
    cname = class_name or vocab.names[0]
    matrix = np.zeros((len(domains), len(domains)))
    for i, di in enumerate(domains):
        for j, dj in enumerate(domains):
            report = evaluate(models[di], test_sets[dj], vocab)
            matrix[i, j] = report.mean_std(class_name=cname)[0]
    return matrix, domains


# --- Wilcoxon signed-rank test -------------------------------------------------

EXACT_LIMIT = 25


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # |sum of signed ranks|
    p_value: float
    n: int            # pairs remaining after zero differences are removed
    method: str       # "exact" or "normal"


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=float)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _exact_two_sided_p(ranks: np.ndarray, w_plus: float) -> float:
    """Exact tail probability of the positive-rank sum over all 2^n equally
    likely sign assignments, via subset-sum counting on doubled ranks
    (average ranks are half-integers, so doubling keeps everything integer)."""
    doubled = np.rint(ranks * 2.0).astype(np.int64)
    total = int(doubled.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    w2 = int(round(w_plus * 2.0))
    lo, hi = min(w2, total - w2), max(w2, total - w2)
    p = (counts[: lo + 1].sum() + counts[hi:].sum()) / 2.0 ** ranks.size
    return float(min(p, 1.0))


def _normal_two_sided_p(ranks: np.ndarray, w_plus: float, n: int) -> float:
    mu = n * (n + 1) / 4.0
    sigma = math.sqrt(float((ranks.astype(float) ** 2).sum()) / 4.0)
    z = max(abs(w_plus - mu) - 0.5, 0.0) / sigma
    return float(min(1.0, math.erfc(z / math.sqrt(2.0))))


def wilcoxon_signed_rank(paired_a: Sequence[float], paired_b: Sequence[float]) -> WilcoxonResult:
    """Two-sided paired test. Zero differences are discarded; tied absolute
    differences share average ranks. Exact enumeration for n <= 25, normal
    approximation with continuity correction above."""
    a = np.asarray(paired_a, dtype=float)
    b = np.asarray(paired_b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError("paired inputs must be equal-length 1-D sequences")
    d = a - b
    d = d[d != 0]
    n = int(d.size)
    if n < 6:
        raise ValueError(f"insufficient pairs: {n} non-zero differences, need at least 6")
    ranks = _average_ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    statistic = abs(w_plus - w_minus)
    if n <= EXACT_LIMIT:
        return WilcoxonResult(statistic, _exact_two_sided_p(ranks, w_plus), n, "exact")
    return WilcoxonResult(statistic, _normal_two_sided_p(ranks, w_plus, n), n, "normal")
