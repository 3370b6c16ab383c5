"""Deterministic training loop: SGD with Nesterov momentum, polynomial
learning-rate decay, per-epoch on-the-fly augmentation and label dropout,
best-validation-Dice checkpoint selection, and a grid search over the
initial learning rate and batch size.

Every random draw is keyed by (run seed, epoch, sample id), so a run is a
pure function of (config, data) and two runs with the same manifest
reproduce identical metric curves.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import torch

from . import __version__
from .dropout import DropoutConfig, apply_label_dropout
from .losses import LossConfig, get_loss
from .metrics import mean_foreground_dice, predict_labels
from .model import UNet, UNetConfig, UPSAMPLE_MODE, init_model
from .seeding import AUGMENT_STREAM, epoch_rng, presentation_rng, presentation_seed
from .synth import AugmentConfig, augment
from .types import ClassVocabulary, SegmentationSample, validate_sample

NESTEROV_MOMENTUM = 0.9  # fixed by the training protocol

# Cross-entropy on a (K+1)-class problem starts near ln(K+1); normalization
# layers keep activations bounded, so a runaway learning rate shows up as an
# exploding-but-finite loss long before float overflow. Treat either a
# non-finite loss or one above this cap as divergence.
DIVERGENCE_LOSS_CAP = 1e4


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch_size: int = 8
    initial_lr: float = 0.05
    lr_decay_power: float = 0.9
    loss: LossConfig = LossConfig("standard")
    dropout: Optional[DropoutConfig] = None
    augment: Optional[AugmentConfig] = None
    seed: int = 0
    model: Optional[UNetConfig] = None  # derived from the data when None
    lr_grid: tuple[float, ...] = (0.1, 0.01, 0.001)
    batch_grid: tuple[int, ...] = (8, 16)
    grid_epochs: Optional[int] = None  # reduced budget for grid search

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.initial_lr <= 0:
            raise ValueError(f"initial_lr must be positive, got {self.initial_lr}")


@dataclass
class RunManifest:
    """Full reproducibility record of one training run."""

    config: dict[str, Any]
    model_config: dict[str, Any]
    dataset_fingerprints: dict[str, dict[str, Any]]
    grid_point: Optional[dict[str, Any]]
    epochs_run: int
    train_loss: list[float]
    val_dice: list[float]
    best_epoch: int
    best_val_dice: float
    diverged: bool
    wall_time_s: float
    code_version: str

    def normalized(self) -> dict[str, Any]:
        """Manifest dict with wall-clock time removed, for equality checks."""
        out = asdict(self)
        out.pop("wall_time_s")
        return out

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True))

    @classmethod
    def from_json(cls, path: str | Path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))


class TrainingDiverged(RuntimeError):
    """Raised when the loss becomes non-finite; carries a diagnostic manifest."""

    def __init__(self, message: str, manifest: RunManifest):
        super().__init__(message)
        self.manifest = manifest


def _jsonable(value: Any) -> Any:
    """Recursively convert to JSON-native structures so an in-memory manifest
    compares equal to one reloaded from disk."""
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (frozenset, set)):
        return sorted(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


def config_to_jsonable(cfg: TrainConfig) -> dict[str, Any]:
    out = asdict(cfg)
    out["momentum"] = NESTEROV_MOMENTUM
    out["nesterov"] = True
    return _jsonable(out)


def dataset_fingerprint(samples: Sequence[SegmentationSample]) -> dict[str, Any]:
    digests = {s.sample_id: s.content_digest() for s in samples}
    combined = hashlib.sha256("".join(sorted(digests.values())).encode()).hexdigest()
    return {"n": len(samples), "combined": combined, "samples": digests}


def check_split_disjoint(fingerprints: dict[str, dict[str, Any]]) -> None:
    names = list(fingerprints)
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            shared = set(fingerprints[a]["samples"].values()) & set(fingerprints[b]["samples"].values())
            if shared:
                raise ValueError(f"splits {a!r} and {b!r} share {len(shared)} samples")


def _validate_sets(train_set, val_set) -> int:
    if not train_set or not val_set:
        raise ValueError("train and validation sets must be non-empty")
    k = int(train_set[0].presence.shape[0])
    vocab = ClassVocabulary(tuple(f"class{i + 1}" for i in range(k)))
    bad = []
    for s in list(train_set) + list(val_set):
        result = validate_sample(s, vocab)
        if not result.ok:
            bad.append(f"{s.sample_id}: {'; '.join(result.violations)}")
    if bad:
        raise ValueError("invalid samples:\n" + "\n".join(bad))
    return k


def _present(sample: SegmentationSample, cfg: TrainConfig, epoch: int) -> SegmentationSample:
    """One on-the-fly presentation: augmentation first, then label dropout,
    both keyed by (seed, epoch, sample id) and applied to the pristine
    per-epoch sample."""
    s = sample
    if cfg.augment is not None:
        s = augment(s, cfg.augment, presentation_seed(cfg.seed, epoch, s.sample_id, AUGMENT_STREAM))
    if cfg.dropout is not None:
        s = apply_label_dropout(s, cfg.dropout, presentation_rng(cfg.seed, epoch, s.sample_id))
    return s


def _collate(samples: Sequence[SegmentationSample]) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    x = torch.from_numpy(np.stack([s.image for s in samples])[:, None, :, :])
    t = torch.from_numpy(np.stack([s.labels for s in samples]).astype(np.int64))
    p = torch.from_numpy(np.stack([s.presence for s in samples]))
    return x, t, p


def train(
    cfg: TrainConfig,
    train_set: Sequence[SegmentationSample],
    val_set: Sequence[SegmentationSample],
    grid_point: Optional[dict[str, Any]] = None,
) -> tuple[UNet, RunManifest]:
    """Run the full protocol and return the model of the best-validation-Dice
    epoch together with its manifest."""
    k = _validate_sets(train_set, val_set)
    model_cfg = cfg.model or UNetConfig(out_channels=k + 1, seed=cfg.seed)
    if model_cfg.out_channels != k + 1:
        raise ValueError(f"model emits {model_cfg.out_channels} channels but data has K={k} classes")
    model_cfg.check_image_size(train_set[0].size)

    fingerprints = {"train": dataset_fingerprint(train_set), "val": dataset_fingerprint(val_set)}

    torch.use_deterministic_algorithms(True)
    model = init_model(model_cfg)
    opt = torch.optim.SGD(model.parameters(), lr=cfg.initial_lr, momentum=NESTEROV_MOMENTUM, nesterov=True)
    loss_fn = get_loss(cfg.loss.kind)

    def make_manifest(diverged: bool, wall: float) -> RunManifest:
        return RunManifest(
            config=config_to_jsonable(cfg),
            model_config=_jsonable({**asdict(model_cfg), "upsample": UPSAMPLE_MODE}),
            dataset_fingerprints=fingerprints,
            grid_point=grid_point,
            epochs_run=len(train_losses),
            train_loss=list(train_losses),
            val_dice=list(val_dices),
            best_epoch=best_epoch,
            best_val_dice=best_dice,
            diverged=diverged,
            wall_time_s=wall,
            code_version=__version__,
        )

    train_losses: list[float] = []
    val_dices: list[float] = []
    best_dice, best_epoch = -1.0, -1
    best_state: Optional[dict] = None
    t0 = time.perf_counter()

    for epoch in range(cfg.epochs):
        lr = cfg.initial_lr * (1.0 - epoch / cfg.epochs) ** cfg.lr_decay_power
        for group in opt.param_groups:
            group["lr"] = lr
        order = epoch_rng(cfg.seed, epoch).permutation(len(train_set))
        model.train()
        epoch_loss, seen = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            rows = [_present(train_set[i], cfg, epoch) for i in order[start : start + cfg.batch_size]]
            x, t, p = _collate(rows)
            logits = model(x)
            loss = loss_fn(logits, t, p)
            loss_val = float(loss.detach())
            if not math.isfinite(loss_val) or loss_val > DIVERGENCE_LOSS_CAP:
                train_losses.append(loss_val if math.isfinite(loss_val) else float("nan"))
                raise TrainingDiverged(
                    f"loss {loss_val:g} at epoch {epoch} (lr={lr:g})",
                    make_manifest(True, time.perf_counter() - t0),
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_loss += loss_val * len(rows)
            seen += len(rows)
        train_losses.append(epoch_loss / seen)
        val_dice = mean_foreground_dice(predict_labels(model, val_set), val_set)
        val_dices.append(val_dice)
        if val_dice > best_dice:
            best_dice, best_epoch = val_dice, epoch
            best_state = copy.deepcopy(model.state_dict())

    assert best_state is not None
    model.load_state_dict(best_state)
    model.eval()
    return model, make_manifest(False, time.perf_counter() - t0)


@dataclass(frozen=True)
class GridSearchOutcome:
    config: TrainConfig
    table: tuple[dict[str, Any], ...]


def grid_search(cfg: TrainConfig, train_set, val_set) -> GridSearchOutcome:
    """Train one (reduced-budget) run per grid point and return the config
    with the highest best-validation Dice; ties break toward the lower
    learning rate, then the smaller batch."""
    points = [(lr, bs) for lr in cfg.lr_grid for bs in cfg.batch_grid]
    if not points:
        raise ValueError("empty grid")
    budget = cfg.grid_epochs or cfg.epochs
    table: list[dict[str, Any]] = []
    for lr, bs in points:
        sub = replace(cfg, initial_lr=lr, batch_size=bs, epochs=budget)
        try:
            _, manifest = train(sub, train_set, val_set, grid_point={"initial_lr": lr, "batch_size": bs})
            table.append({"initial_lr": lr, "batch_size": bs, "best_val_dice": manifest.best_val_dice, "diverged": False})
        except TrainingDiverged:
            table.append({"initial_lr": lr, "batch_size": bs, "best_val_dice": float("-inf"), "diverged": True})
    alive = [row for row in table if not row["diverged"]]
    if not alive:
        raise RuntimeError("all grid points diverged")
    best = min(alive, key=lambda r: (-r["best_val_dice"], r["initial_lr"], r["batch_size"]))
    chosen = replace(cfg, initial_lr=best["initial_lr"], batch_size=best["batch_size"])
    return GridSearchOutcome(chosen, tuple(table))
