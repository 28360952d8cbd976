"""Full-resolution multi-scale refinement of the coarse network output.

Five bottleneck 1x1x60 convolutions (with rectifiers) fuse the feature taps at
downsample factors 1, 2, 4, 8 and 16; the downsampled ones are upscaled back to
full resolution with fixed bilinear kernels, all five are summed element-wise,
and the 2 score channels are concatenated (62 channels total). A refining
stack of 7x7x64, 5x5x64 and three 3x3x64 convolutions (coarse-to-fine kernel
sizes) followed by a 1x1x2 classifier produces the refined score. Each
refining conv except the classifier is followed by dropout (ratio 0.5), active
only in training mode.
"""

from __future__ import annotations

import hashlib
from collections import OrderedDict
from typing import Mapping

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .interactions import InteractionMapPair
from .layers import BilinearUpsampler, center_crop, check_finite
from .two_stream import FeatureBundle, NetworkConfig, TwoStreamNet

BOTTLENECK_CHANNELS = 60
REFINE_CHANNELS = 64
REFINE_KERNELS = (7, 5, 3, 3, 3)
DROPOUT_RATIO = 0.5
TAP_FACTORS = (1, 2, 4, 8, 16)


class MultiScaleRefiner(nn.Module):
    """Refining head over a TwoStreamNet's feature taps.

    `tap_channels` are the channel counts of the five feature taps (derive them
    from NetworkConfig.tap_channels()). The classifier is the final 1x1x2 conv.
    """

    def __init__(self, tap_channels: tuple[int, ...],
                 bottleneck_channels: int = BOTTLENECK_CHANNELS,
                 refine_channels: int = REFINE_CHANNELS,
                 dropout: float = DROPOUT_RATIO):
        super().__init__()
        if len(tap_channels) != 5:
            raise ValueError("expected five tap channel counts")
        self.tap_channels = tuple(tap_channels)
        self.dropout = dropout
        self.convs = nn.ModuleDict()
        for i, c in enumerate(tap_channels, start=1):
            self.convs[f"fuse{i}"] = nn.Conv2d(c, bottleneck_channels, 1)
        self.ups = nn.ModuleDict({
            f"up{f}": BilinearUpsampler(bottleneck_channels, f)
            for f in TAP_FACTORS if f > 1
        })
        in_ch = bottleneck_channels + 2
        for i, k in enumerate(REFINE_KERNELS, start=1):
            self.convs[f"refine{i}"] = nn.Conv2d(in_ch, refine_channels, k, padding=k // 2)
            in_ch = refine_channels
        self.convs["score_refine"] = nn.Conv2d(refine_channels, 2, 1)

    def forward_tensors(self, feats: list[torch.Tensor], score_full: torch.Tensor):
        full_hw = tuple(score_full.shape[-2:])
        fused = None
        for i, (feat, factor) in enumerate(zip(feats, TAP_FACTORS), start=1):
            expected = (-(-full_hw[0] // factor), -(-full_hw[1] // factor))
            if tuple(feat.shape[-2:]) != expected:
                raise ValueError(f"tap {i} (factor {factor}) has grid "
                                 f"{tuple(feat.shape[-2:])}, expected {expected}")
            name = f"fuse{i}"
            x = check_finite(F.relu(self.convs[name](feat)), name)
            if factor > 1:
                x = center_crop(self.ups[f"up{factor}"](x), full_hw)
            fused = x if fused is None else fused + x
        x = torch.cat([fused, score_full], dim=1)
        for i in range(1, len(REFINE_KERNELS) + 1):
            name = f"refine{i}"
            x = check_finite(F.relu(self.convs[name](x)), name)
            x = F.dropout(x, p=self.dropout, training=self.training)
        return check_finite(self.convs["score_refine"](x), "score_refine")

    def init_random(self, seed: int = 0) -> None:
        """Variance-scaling (fan-in) random init for every conv, zero biases."""
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for conv in self.convs.values():
                fan_in = conv.weight.shape[1] * conv.weight.shape[2] * conv.weight.shape[3]
                std = (2.0 / fan_in) ** 0.5
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * std)
                nn.init.zeros_(conv.bias)

    def weights(self) -> "OrderedDict[str, tuple[np.ndarray, np.ndarray]]":
        out = OrderedDict()
        for name, conv in self.convs.items():
            out[name] = (conv.weight.detach().cpu().numpy().copy(),
                         conv.bias.detach().cpu().numpy().copy())
        return out

    def load_weights(self, arrays: Mapping[str, tuple[np.ndarray, np.ndarray]]) -> None:
        for name, conv in self.convs.items():
            if name not in arrays:
                raise KeyError(f"missing weights for layer {name!r}")
            w, b = arrays[name]
            if tuple(conv.weight.shape) != tuple(w.shape):
                raise ValueError(f"shape mismatch for layer {name!r}")
            with torch.no_grad():
                conv.weight.copy_(torch.from_numpy(np.ascontiguousarray(w)))
                conv.bias.copy_(torch.from_numpy(np.ascontiguousarray(b)))

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for name, (w, b) in sorted(self.weights().items()):
            h.update(name.encode())
            h.update(np.ascontiguousarray(w, dtype=np.float32).tobytes())
            h.update(np.ascontiguousarray(b, dtype=np.float32).tobytes())
        return h.hexdigest()


def build_refiner(config: NetworkConfig, **kwargs) -> MultiScaleRefiner:
    return MultiScaleRefiner(config.tap_channels(), **kwargs)


def refine(refiner: MultiScaleRefiner, bundle: FeatureBundle) -> np.ndarray:
    """Numpy-facing refinement: FeatureBundle -> full-resolution (H,W,2) score map."""
    refiner.eval()
    dtype = next(refiner.parameters()).dtype
    feats = [torch.from_numpy(f.transpose(2, 0, 1)[None]).to(dtype) for f in bundle.features]
    score = torch.from_numpy(bundle.score.transpose(2, 0, 1)[None]).to(dtype)
    with torch.no_grad():
        out = refiner.forward_tensors(feats, score)
    return out[0].permute(1, 2, 0).cpu().numpy()


def predict(image, maps: InteractionMapPair, net: TwoStreamNet,
            refiner: MultiScaleRefiner | None = None) -> np.ndarray:
    """Foreground probability map from the frozen base network, refined when a
    refiner is given. Softmax over the two score channels; returns (H, W)."""
    from .two_stream import forward, scores_to_probability

    score, bundle = forward(net, image, maps)
    if refiner is not None:
        score = refine(refiner, bundle)
    return scores_to_probability(score)
