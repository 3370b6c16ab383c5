"""Pixel-wise cross-entropy losses for fully and partially labelled masks.

Three regimes over a (K+1)-channel logit field:

* ``standard_cce`` scores every pixel against all channels and ignores the
  presence vector, so erased structures supervise the background class.
* ``adaptive_cce`` deletes the channels of classes missing from a sample's
  ground truth before normalizing; those channels receive exactly zero
  gradient.
* ``marginal_cce`` keeps all channels but, at background-labelled pixels,
  accepts the summed probability of background plus every missing class.

All three reduce by the mean over every pixel of every sample in the batch,
so batch composition never reweights samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import torch

LOSS_KINDS = ("standard", "adaptive", "marginal")


@dataclass(frozen=True)
class LossConfig:
    kind: str = "standard"

    def __post_init__(self) -> None:
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"loss kind must be one of {LOSS_KINDS}, got {self.kind!r}")


def _check_inputs(logits: torch.Tensor, targets: torch.Tensor, presence: Optional[torch.Tensor]) -> None:
    if logits.ndim != 4:
        raise ValueError(f"logits must be B x (K+1) x H x W, got shape {tuple(logits.shape)}")
    b, c, h, w = logits.shape
    if c < 2:
        raise ValueError("logits need at least background plus one foreground channel")
    if targets.shape != (b, h, w):
        raise ValueError(f"targets shape {tuple(targets.shape)} does not match logits {tuple(logits.shape)}")
    if int(targets.min()) < 0 or int(targets.max()) >= c:
        raise ValueError(f"targets must lie in [0, {c - 1}]")
    if presence is not None and presence.shape != (b, c - 1):
        raise ValueError(f"presence shape {tuple(presence.shape)} does not match batch {b} x K={c - 1}")


def _presence_groups(presence: torch.Tensor) -> list[tuple[tuple[bool, ...], list[int]]]:
    """Batch rows grouped by presence pattern, first-seen order."""
    groups: dict[tuple[bool, ...], list[int]] = {}
    for i, row in enumerate(presence.cpu().tolist()):
        groups.setdefault(tuple(bool(x) for x in row), []).append(i)
    return list(groups.items())


def standard_cce(logits: torch.Tensor, targets: torch.Tensor, presence: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Mean negative log softmax probability of the target, all channels.

    The presence vector is accepted for interface uniformity and ignored:
    this is the naive regime in which missing structures are supervised as
    background.
    """
    _check_inputs(logits, targets, presence)
    logz = torch.logsumexp(logits, dim=1)
    picked = logits.gather(1, targets.unsqueeze(1)).squeeze(1)
    return (logz - picked).mean()


def _adaptive_pixel_nll(logits: torch.Tensor, targets: torch.Tensor, pattern: tuple[bool, ...]) -> torch.Tensor:
    c = logits.shape[1]
    keep = [0] + [k + 1 for k, flag in enumerate(pattern) if flag]
    lut = torch.full((c,), -1, dtype=torch.long, device=logits.device)
    lut[keep] = torch.arange(len(keep), device=logits.device)
    mapped = lut[targets]
    if int(mapped.min()) < 0:
        raise ValueError("targets label a class whose presence flag is false")
    sub = logits[:, keep]
    logz = torch.logsumexp(sub, dim=1)
    picked = sub.gather(1, mapped.unsqueeze(1)).squeeze(1)
    return logz - picked


def adaptive_cce(logits: torch.Tensor, targets: torch.Tensor, presence: torch.Tensor) -> torch.Tensor:
    """Per sample, drop the channels of classes whose presence flag is false,
    renormalize over the surviving channels and average the negative
    log-probability of the target over all pixels."""
    _check_inputs(logits, targets, presence)
    groups = _presence_groups(presence)
    if len(groups) == 1:
        return _adaptive_pixel_nll(logits, targets, groups[0][0]).mean()
    total = logits.new_zeros(())
    pixels = 0
    for pattern, rows in groups:
        nll = _adaptive_pixel_nll(logits[rows], targets[rows], pattern)
        total = total + nll.sum()
        pixels += nll.numel()
    return total / pixels


def _marginal_pixel_nll(logits: torch.Tensor, targets: torch.Tensor, pattern: tuple[bool, ...]) -> torch.Tensor:
    c = logits.shape[1]
    missing = [k + 1 for k, flag in enumerate(pattern) if not flag]
    allowed = torch.ones(c, dtype=torch.bool, device=logits.device)
    allowed[missing] = False
    if not bool(allowed[targets].all()):
        raise ValueError("targets label a class whose presence flag is false")
    logz = torch.logsumexp(logits, dim=1)
    picked = logits.gather(1, targets.unsqueeze(1)).squeeze(1)
    if missing:
        merged = torch.logsumexp(logits[:, [0] + missing], dim=1)
        picked = torch.where(targets == 0, merged, picked)
    return logz - picked


def marginal_cce(logits: torch.Tensor, targets: torch.Tensor, presence: torch.Tensor) -> torch.Tensor:
    """Softmax over all channels; background-labelled pixels score the merged
    probability of background plus every missing class, foreground pixels
    score their own class."""
    _check_inputs(logits, targets, presence)
    groups = _presence_groups(presence)
    if len(groups) == 1:
        return _marginal_pixel_nll(logits, targets, groups[0][0]).mean()
    total = logits.new_zeros(())
    pixels = 0
    for pattern, rows in groups:
        nll = _marginal_pixel_nll(logits[rows], targets[rows], pattern)
        total = total + nll.sum()
        pixels += nll.numel()
    return total / pixels


LossFn = Callable[[torch.Tensor, torch.Tensor, torch.Tensor], torch.Tensor]

_LOSSES: dict[str, LossFn] = {
    "standard": standard_cce,
    "adaptive": adaptive_cce,
    "marginal": marginal_cce,
}


def get_loss(kind: str) -> LossFn:
    if kind not in _LOSSES:
        raise ValueError(f"loss kind must be one of {LOSS_KINDS}, got {kind!r}")
    return _LOSSES[kind]
