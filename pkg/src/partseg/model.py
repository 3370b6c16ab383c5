"""Compact configurable U-Net emitting per-pixel class logits."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F

UPSAMPLE_MODE = "nearest"  # recorded in run manifests alongside the config

CHECKPOINT_FORMAT = "partseg-checkpoint-v1"


@dataclass(frozen=True)
class UNetConfig:
    depth: int = 4
    base_channels: int = 16
    in_channels: int = 1
    out_channels: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.base_channels < 1 or self.in_channels < 1:
            raise ValueError("channel counts must be positive")
        if self.out_channels < 2:
            raise ValueError(f"out_channels must be >= 2 (background + classes), got {self.out_channels}")

    def check_image_size(self, size: int) -> None:
        if size % (2 ** self.depth) != 0:
            raise ValueError(f"image side {size} is not divisible by 2^{self.depth}")


class _DoubleConv(nn.Sequential):
    def __init__(self, cin: int, cout: int):
        super().__init__(
            nn.Conv2d(cin, cout, 3, padding=1, bias=False),
            nn.BatchNorm2d(cout),
            nn.ReLU(inplace=True),
            nn.Conv2d(cout, cout, 3, padding=1, bias=False),
            nn.BatchNorm2d(cout),
            nn.ReLU(inplace=True),
        )


class UNet(nn.Module):
    """Encoder-decoder with skip connections; channels double per level and
    spatial dimensions are preserved end to end."""

    def __init__(self, cfg: UNetConfig):
        super().__init__()
        self.cfg = cfg
        chs = [cfg.base_channels * 2 ** i for i in range(cfg.depth + 1)]
        self.stem = _DoubleConv(cfg.in_channels, chs[0])
        self.pool = nn.MaxPool2d(2)
        self.downs = nn.ModuleList(_DoubleConv(chs[i], chs[i + 1]) for i in range(cfg.depth))
        self.reduces = nn.ModuleList(nn.Conv2d(chs[i + 1], chs[i], 1) for i in range(cfg.depth))
        self.ups = nn.ModuleList(_DoubleConv(2 * chs[i], chs[i]) for i in range(cfg.depth))
        self.head = nn.Conv2d(chs[0], cfg.out_channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != self.cfg.in_channels:
            raise ValueError(f"expected B x {self.cfg.in_channels} x H x W input, got {tuple(x.shape)}")
        h, w = x.shape[-2:]
        if h % (2 ** self.cfg.depth) or w % (2 ** self.cfg.depth):
            raise ValueError(f"spatial dims {h}x{w} not divisible by 2^{self.cfg.depth}")
        skips = []
        x = self.stem(x)
        for down in self.downs:
            skips.append(x)
            x = down(self.pool(x))
        for i in reversed(range(self.cfg.depth)):
            x = F.interpolate(x, scale_factor=2, mode=UPSAMPLE_MODE)
            x = self.reduces[i](x)
            x = self.ups[i](torch.cat([skips[i], x], dim=1))
        return self.head(x)


def init_model(cfg: UNetConfig) -> UNet:
    """Build a U-Net whose weights are a deterministic function of cfg.seed."""
    torch.manual_seed(cfg.seed)
    return UNet(cfg)


def save_checkpoint(path: str | Path, model: UNet, epoch: int, val_dice: float) -> None:
    """Single self-describing archive: config, weights, epoch, val Dice."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "unet": asdict(model.cfg),
        "upsample": UPSAMPLE_MODE,
        "state_dict": model.state_dict(),
        "epoch": int(epoch),
        "val_dice": float(val_dice),
    }
    torch.save(payload, str(path))


def load_checkpoint(path: str | Path) -> tuple[UNet, dict]:
    payload = torch.load(str(path), map_location="cpu")
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a {CHECKPOINT_FORMAT} archive")
    model = UNet(UNetConfig(**payload["unet"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    meta = {k: payload[k] for k in ("epoch", "val_dice", "upsample")}
    return model, meta
