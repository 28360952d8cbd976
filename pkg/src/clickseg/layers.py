"""Shared building blocks for the segmentation networks (torch backend)."""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

# Per-block (conv count, output channels) of the 16-layer base network.
BASE_BLOCKS = ((2, 64), (2, 128), (3, 256), (3, 512), (3, 512))
BASE_FC_CHANNELS = 4096

DEFAULT_CHANNEL_MEANS = (123.68, 116.779, 103.939)  # RGB, 0-255 inputs
DEFAULT_CHANNEL_STDS = (1.0, 1.0, 1.0)


class NonFiniteActivation(RuntimeError):
    """A layer produced NaN/Inf activations."""

    def __init__(self, layer_id: str):
        self.layer_id = layer_id
        super().__init__(f"non-finite activations after layer {layer_id!r}")


def scaled_blocks(channel_scale: float) -> tuple[tuple[int, int], ...]:
    return tuple((n, max(2, round(c * channel_scale))) for n, c in BASE_BLOCKS)


def scaled_fc(channel_scale: float) -> int:
    return max(4, round(BASE_FC_CHANNELS * channel_scale))


def pool2(x: torch.Tensor) -> torch.Tensor:
    """2x2 stride-2 max pooling with ceil-mode halving."""
    return F.max_pool2d(x, kernel_size=2, stride=2, ceil_mode=True)


def center_crop(x: torch.Tensor, target_hw: tuple[int, int]) -> torch.Tensor:
    h, w = x.shape[-2:]
    th, tw = target_hw
    if h < th or w < tw:
        raise ValueError(f"cannot crop {h}x{w} to {th}x{tw}")
    dr, dc = (h - th) // 2, (w - tw) // 2
    return x[..., dr:dr + th, dc:dc + tw]


def _bilinear_kernel_2x() -> np.ndarray:
    # factor-2 kernel (size 4, half-pixel centers): outer product of [.25 .75 .75 .25]
    taps = np.array([0.25, 0.75, 0.75, 0.25])
    return np.outer(taps, taps)


class BilinearUpsampler(nn.Module):
    """Fixed (non-trainable) 2^k upsampling as chained factor-2 bilinear deconvolutions.

    Chaining keeps coarse-to-fine score fusion consistent across stride
    variants: upsampling by 2 twice is bitwise the same operation sequence as
    the first two steps of an 8x or 32x upsampler.
    """

    def __init__(self, channels: int, factor: int):
        super().__init__()
        steps = int(round(math.log2(factor)))
        if 2 ** steps != factor or factor < 2:
            raise ValueError(f"upsample factor must be a power of two >= 2, got {factor}")
        self.factor = factor
        kernel = torch.from_numpy(_bilinear_kernel_2x()).to(torch.float32)
        self.steps = nn.ModuleList()
        for _ in range(steps):
            deconv = nn.ConvTranspose2d(channels, channels, kernel_size=4, stride=2,
                                        padding=1, bias=False, groups=channels)
            with torch.no_grad():
                deconv.weight.copy_(kernel.expand(channels, 1, 4, 4))
            deconv.weight.requires_grad_(False)
            self.steps.append(deconv)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for step in self.steps:
            x = step(x)
        return x


def check_finite(x: torch.Tensor, layer_id: str) -> torch.Tensor:
    if not torch.isfinite(x).all():
        raise NonFiniteActivation(layer_id)
    return x


def image_to_tensor(image, means, stds, dtype=torch.float32) -> torch.Tensor:
    """(H,W,3) or (H,W) array in 0-255 -> normalized (1,3,H,W) tensor."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = np.stack([img] * 3, axis=-1)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H,W,3) or (H,W) image, got {img.shape}")
    img = (img - np.asarray(means)) / np.asarray(stds)
    return torch.from_numpy(img.transpose(2, 0, 1)[None]).to(dtype)


def maps_to_tensor(pair, dtype=torch.float32) -> torch.Tensor:
    """Interaction maps fed raw in 0-255: (1,2,H,W) tensor, positive first."""
    return torch.from_numpy(pair.stacked()[None]).to(dtype)
