"""The coarse click-guided segmentation network.

Two identical convolutional streams (first `split_index` conv-relu-pool blocks
of the 16-layer base network) extract features from the image (3 channels) and
from the interaction-map pair (2 channels). Their outputs are concatenated and
fed to a fusion net: the remaining base conv blocks plus three convolutionalized
dense layers ending in a 2-channel score. A fixed bilinear upsampler restores
input resolution (overshoot from ceil-mode pooling is center-cropped).

Stride variants refine the coarse stride-32 scores FCN-style with zero-
initialized 1x1 score layers on the pooled features at stride 16 (pool4) and
stride 8 (pool3), fused by 2x upsample + sum.

Ablations: `single_stream` drops the interaction stream and feeds a 5-channel
image+maps stack to a single stream; `stream_removed` keeps only the image
stream and concatenates down-scaled interaction maps at the stream end.

Layer naming: stream convs are conv{b}_{i}_s1 / conv{b}_{i}_s2, fusion convs
conv{b}_{i}, then fc6 (7x7), fc7 (1x1), score (1x1x2), and skip layers
score_pool4 / score_pool3. Fixed bilinear upsample kernels are reconstructed
from the config rather than serialized.
"""

from __future__ import annotations

import hashlib
from collections import OrderedDict
from dataclasses import dataclass
from typing import Mapping

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .interactions import InteractionMapPair
from .layers import (
    BilinearUpsampler,
    DEFAULT_CHANNEL_MEANS,
    DEFAULT_CHANNEL_STDS,
    center_crop,
    check_finite,
    image_to_tensor,
    maps_to_tensor,
    pool2,
    scaled_blocks,
    scaled_fc,
)

ABLATIONS = ("none", "single_stream", "stream_removed")
STRIDE_VARIANTS = (32, 16, 8)


@dataclass(frozen=True)
class NetworkConfig:
    """Architectural knobs.

    split_index: conv-relu-pool blocks assigned to the streams (1..5); the rest
    form the fusion net. 4 is the reference network; single_stream reproduces
    the early-fusion single-stream baseline; stream_removed drops only the
    interaction stream. channel_scale shrinks every channel count by the same
    factor for desk-scale runs (1.0 = reference sizes). input_height/width, if
    set, pin the accepted input size.
    """

    split_index: int = 4
    stride_variant: int = 8
    ablation: str = "none"
    channel_scale: float = 1.0
    input_height: int | None = None
    input_width: int | None = None

    def __post_init__(self):
        if not 1 <= self.split_index <= 5:
            raise ValueError("split_index must be in 1..5")
        if self.stride_variant not in STRIDE_VARIANTS:
            raise ValueError(f"stride_variant must be one of {STRIDE_VARIANTS}")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}")
        if not 0 < self.channel_scale <= 1:
            raise ValueError("channel_scale must be in (0, 1]")

    @property
    def blocks(self) -> tuple[tuple[int, int], ...]:
        return scaled_blocks(self.channel_scale)

    @property
    def fc_channels(self) -> int:
        return scaled_fc(self.channel_scale)

    @property
    def two_stream(self) -> bool:
        return self.ablation == "none"

    def block_channels(self, b: int) -> int:
        return self.blocks[b - 1][1]

    def tap_channels(self) -> tuple[int, ...]:
        """Channels of the five multi-scale feature taps (pre-pool, blocks 1-4
        plus the last fusion conv)."""
        out = []
        for b in range(1, 5):
            c = self.block_channels(b)
            out.append(2 * c if (self.two_stream and b <= self.split_index) else c)
        c5 = self.block_channels(5)
        out.append(2 * c5 if (self.two_stream and self.split_index == 5) else c5)
        return tuple(out)

    def pooled_channels(self, b: int) -> int:
        """Channels of the main-path tensor right after pooling stage b."""
        c = self.block_channels(b)
        if self.two_stream and b <= self.split_index:
            return 2 * c
        if self.ablation == "stream_removed" and b == self.split_index:
            return c + 2
        return c

    def to_dict(self) -> dict:
        return {
            "split_index": self.split_index,
            "stride_variant": self.stride_variant,
            "ablation": self.ablation,
            "channel_scale": self.channel_scale,
            "input_height": self.input_height,
            "input_width": self.input_width,
        }

    @staticmethod
    def from_dict(d: Mapping) -> "NetworkConfig":
        return NetworkConfig(**{k: d[k] for k in (
            "split_index", "stride_variant", "ablation", "channel_scale",
            "input_height", "input_width") if k in d})


@dataclass
class FeatureBundle:
    """Six multi-scale taps for the refiner: five pre-pool feature maps
    (downsample factors 1, 2, 4, 8, 16) plus the full-resolution score."""

    features: tuple[np.ndarray, ...]
    factors: tuple[int, ...]
    score: np.ndarray
    coarse_grid: tuple[int, int]

    def __post_init__(self):
        if len(self.features) != 5 or len(self.factors) != 5:
            raise ValueError("expected five feature taps")
        h, w = self.score.shape[:2]
        for feat, f in zip(self.features, self.factors):
            eh, ew = -(-h // f), -(-w // f)
            if feat.shape[:2] != (eh, ew):
                raise ValueError(
                    f"tap at factor {f} has shape {feat.shape[:2]}, expected {(eh, ew)}")

    @property
    def entries(self):
        return tuple(zip(self.features + (self.score,), self.factors + (1,)))


class TwoStreamNet(nn.Module):
    """See module docstring. Built by `build`; weights set by `init_from_pretrained`."""

    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        self.convs = nn.ModuleDict()
        blocks = config.blocks

        stream_suffixes = ("_s1", "_s2") if config.two_stream else ("_s1",)
        in_ch_first = {"none": (3, 2), "single_stream": (5,), "stream_removed": (3,)}[config.ablation]

        for suffix, first_in in zip(stream_suffixes, in_ch_first):
            in_ch = first_in
            for b in range(1, config.split_index + 1):
                n_convs, out_ch = blocks[b - 1]
                for i in range(1, n_convs + 1):
                    self.convs[f"conv{b}_{i}{suffix}"] = nn.Conv2d(in_ch, out_ch, 3, padding=1)
                    in_ch = out_ch

        fusion_in = config.pooled_channels(config.split_index)
        in_ch = fusion_in
        for b in range(config.split_index + 1, 6):
            n_convs, out_ch = blocks[b - 1]
            for i in range(1, n_convs + 1):
                self.convs[f"conv{b}_{i}"] = nn.Conv2d(in_ch, out_ch, 3, padding=1)
                in_ch = out_ch
        self.convs["fc6"] = nn.Conv2d(in_ch, config.fc_channels, 7, padding=3)
        self.convs["fc7"] = nn.Conv2d(config.fc_channels, config.fc_channels, 1)
        self.convs["score"] = nn.Conv2d(config.fc_channels, 2, 1)
        nn.init.zeros_(self.convs["score"].weight)
        nn.init.zeros_(self.convs["score"].bias)

        if config.stride_variant <= 16:
            self.convs["score_pool4"] = nn.Conv2d(config.pooled_channels(4), 2, 1)
            nn.init.zeros_(self.convs["score_pool4"].weight)
            nn.init.zeros_(self.convs["score_pool4"].bias)
        if config.stride_variant <= 8:
            self.convs["score_pool3"] = nn.Conv2d(config.pooled_channels(3), 2, 1)
            nn.init.zeros_(self.convs["score_pool3"].weight)
            nn.init.zeros_(self.convs["score_pool3"].bias)

        self.up2_score = BilinearUpsampler(2, 2)
        self.up_final = BilinearUpsampler(2, config.stride_variant)

        self.register_buffer("channel_means", torch.tensor(DEFAULT_CHANNEL_MEANS))
        self.register_buffer("channel_stds", torch.tensor(DEFAULT_CHANNEL_STDS))

    # -- forward ---------------------------------------------------------

    def _run_block(self, x, b, suffix):
        n_convs = self.config.blocks[b - 1][0]
        for i in range(1, n_convs + 1):
            name = f"conv{b}_{i}{suffix}"
            x = check_finite(F.relu(self.convs[name](x)), name)
        return x

    def forward_tensors(self, x_img: torch.Tensor, x_maps: torch.Tensor):
        """Returns (full-resolution score (1,2,H,W), tap dict of tensors)."""
        cfg = self.config
        in_h, in_w = x_img.shape[-2:]
        taps: dict[str, torch.Tensor] = {}
        pooled: dict[int, torch.Tensor] = {}

        if cfg.ablation == "single_stream":
            paths = [torch.cat([x_img, x_maps], dim=1)]
            suffixes = ["_s1"]
        elif cfg.ablation == "stream_removed":
            paths = [x_img]
            suffixes = ["_s1"]
        else:
            paths = [x_img, x_maps]
            suffixes = ["_s1", "_s2"]

        stream_pooled = []
        for x, suffix in zip(paths, suffixes):
            per_block_pool = {}
            for b in range(1, cfg.split_index + 1):
                x = self._run_block(x, b, suffix)
                taps[f"feat{b}{suffix}"] = x
                x = pool2(x)
                per_block_pool[b] = x
            stream_pooled.append(per_block_pool)

        for b in range(1, cfg.split_index + 1):
            parts = [sp[b] for sp in stream_pooled]
            pooled[b] = torch.cat(parts, dim=1) if len(parts) > 1 else parts[0]
            taps[f"feat{b}"] = torch.cat(
                [taps[f"feat{b}{s}"] for s in suffixes], dim=1)

        x = pooled[cfg.split_index]
        if cfg.ablation == "stream_removed":
            small = F.interpolate(x_maps, size=x.shape[-2:], mode="bilinear",
                                  align_corners=False)
            x = torch.cat([x, small], dim=1)
            pooled[cfg.split_index] = x

        for b in range(cfg.split_index + 1, 6):
            x = self._run_block(x, b, "")
            taps[f"feat{b}"] = x
            x = pool2(x)
            pooled[b] = x

        x = check_finite(F.relu(self.convs["fc6"](x)), "fc6")
        x = check_finite(F.relu(self.convs["fc7"](x)), "fc7")
        score = check_finite(self.convs["score"](x), "score")
        taps["coarse_score"] = score

        if cfg.stride_variant <= 16:
            skip4 = self.convs["score_pool4"](pooled[4])
            score = center_crop(self.up2_score(score), skip4.shape[-2:]) + skip4
        if cfg.stride_variant <= 8:
            skip3 = self.convs["score_pool3"](pooled[3])
            score = center_crop(self.up2_score(score), skip3.shape[-2:]) + skip3

        full = center_crop(self.up_final(score), (in_h, in_w))
        taps["score_full"] = full
        return full, taps

    # -- numpy-facing API --------------------------------------------------

    def prepare_inputs(self, image, maps: InteractionMapPair, dtype=None):
        dtype = dtype or next(self.parameters()).dtype
        x_img = image_to_tensor(image, self.channel_means.cpu().numpy(),
                                self.channel_stds.cpu().numpy(), dtype)
        x_maps = maps_to_tensor(maps, dtype)
        if x_img.shape[-2:] != x_maps.shape[-2:]:
            raise ValueError("image and interaction maps have different sizes")
        cfg = self.config
        if cfg.input_height is not None and x_img.shape[-2] != cfg.input_height:
            raise ValueError(f"configured input height {cfg.input_height}, got {x_img.shape[-2]}")
        if cfg.input_width is not None and x_img.shape[-1] != cfg.input_width:
            raise ValueError(f"configured input width {cfg.input_width}, got {x_img.shape[-1]}")
        return x_img, x_maps

    # -- weights as named arrays -------------------------------------------

    def weights(self) -> "OrderedDict[str, tuple[np.ndarray, np.ndarray]]":
        out = OrderedDict()
        for name, conv in self.convs.items():
            out[name] = (conv.weight.detach().cpu().numpy().copy(),
                         conv.bias.detach().cpu().numpy().copy())
        return out

    def load_weights(self, arrays: Mapping[str, tuple[np.ndarray, np.ndarray]],
                     strict: bool = True) -> None:
        for name, conv in self.convs.items():
            if name not in arrays:
                if strict:
                    raise KeyError(f"missing weights for layer {name!r}")
                continue
            w, b = arrays[name]
            if tuple(conv.weight.shape) != tuple(w.shape):
                raise ValueError(f"shape mismatch for layer {name!r}: "
                                 f"{tuple(w.shape)} vs {tuple(conv.weight.shape)}")
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

    def describe(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(name, tuple(conv.weight.shape)) for name, conv in self.convs.items()]


def build(config: NetworkConfig) -> TwoStreamNet:
    """Construct the layer graph for a configuration (weights default-initialized,
    score layers zero)."""
    return TwoStreamNet(config)


def init_from_pretrained(base, config: NetworkConfig) -> TwoStreamNet:
    """Build and initialize from pretrained base-network weights.

    Surgery on layers whose shapes differ from the base network:
    - interaction-stream conv1_1: per-filter mean over the 3 input channels of
      the base conv1_1, replicated to both interaction channels;
    - single-stream conv1_1 (5-channel input): base RGB filters plus the same
      replicated mean filters for the two map channels;
    - first fusion conv (doubled input from stream concatenation): input
      channels split in half, each half a copy of the base layer; the two
      extra map channels of the stream_removed variant are zero-initialized;
    - score and skip-score convs: all zeros.
    All other transferable layers are copied; upsample filters are fixed
    bilinear kernels. Raises ValueError naming the first mismatched layer.
    """
    net = build(config)
    layers = base.layers
    first_fusion = (f"conv{config.split_index + 1}_1" if config.split_index < 5 else "fc6")

    def base_arrays(name, target_shape=None):
        if name not in layers:
            raise ValueError(f"base weights missing layer {name!r}")
        w, b = layers[name]
        if target_shape is not None and tuple(w.shape) != tuple(target_shape):
            raise ValueError(f"base layer {name!r} has shape {tuple(w.shape)}, "
                             f"expected {tuple(target_shape)}")
        return np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64)

    assignments: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    blocks = config.blocks

    def mean_filters(w):
        return np.repeat(w.mean(axis=1, keepdims=True), 2, axis=1)

    suffixes = ("_s1", "_s2") if config.two_stream else ("_s1",)
    for suffix in suffixes:
        for b in range(1, config.split_index + 1):
            for i in range(1, blocks[b - 1][0] + 1):
                src = f"conv{b}_{i}"
                tgt = f"{src}{suffix}"
                w, bias = base_arrays(src)
                if (b, i) == (1, 1):
                    if suffix == "_s2":
                        w = mean_filters(w)
                    elif config.ablation == "single_stream":
                        w = np.concatenate([w, mean_filters(w)], axis=1)
                assignments[tgt] = (w, bias)

    for b in range(config.split_index + 1, 6):
        for i in range(1, blocks[b - 1][0] + 1):
            name = f"conv{b}_{i}"
            w, bias = base_arrays(name)
            if name == first_fusion and config.ablation == "none":
                w = np.concatenate([w, w], axis=1)
            elif name == first_fusion and config.ablation == "stream_removed":
                w = np.concatenate([w, np.zeros((w.shape[0], 2) + w.shape[2:])], axis=1)
            assignments[name] = (w, bias)

    for name in ("fc6", "fc7"):
        w, bias = base_arrays(name)
        if name == first_fusion and config.ablation == "none":
            w = np.concatenate([w, w], axis=1)
        elif name == first_fusion and config.ablation == "stream_removed":
            w = np.concatenate([w, np.zeros((w.shape[0], 2) + w.shape[2:])], axis=1)
        assignments[name] = (w, bias)

    for name, conv in net.convs.items():
        if name in assignments:
            w, bias = assignments[name]
            if tuple(w.shape) != tuple(conv.weight.shape):
                raise ValueError(
                    f"base layer for {name!r} has shape {tuple(w.shape)}, "
                    f"network expects {tuple(conv.weight.shape)}")
            with torch.no_grad():
                conv.weight.copy_(torch.from_numpy(np.ascontiguousarray(w)).to(conv.weight.dtype))
                conv.bias.copy_(torch.from_numpy(np.ascontiguousarray(bias)).to(conv.bias.dtype))
        else:
            # score / skip-score layers stay all-zero
            nn.init.zeros_(conv.weight)
            nn.init.zeros_(conv.bias)

    means = getattr(base, "channel_means", DEFAULT_CHANNEL_MEANS)
    stds = getattr(base, "channel_stds", DEFAULT_CHANNEL_STDS)
    with torch.no_grad():
        net.channel_means.copy_(torch.tensor(means, dtype=net.channel_means.dtype))
        net.channel_stds.copy_(torch.tensor(stds, dtype=net.channel_stds.dtype))
    return net


def forward(net: TwoStreamNet, image, maps: InteractionMapPair):
    """Numpy-facing forward pass: (H,W,2) score map plus the FeatureBundle."""
    net.eval()
    x_img, x_maps = net.prepare_inputs(image, maps)
    with torch.no_grad():
        full, taps = net.forward_tensors(x_img, x_maps)
    feats = tuple(taps[f"feat{b}"][0].permute(1, 2, 0).cpu().numpy() for b in range(1, 6))
    score_np = full[0].permute(1, 2, 0).cpu().numpy()
    return score_np, FeatureBundle(
        features=feats,
        factors=(1, 2, 4, 8, 16),
        score=score_np,
        coarse_grid=tuple(taps["coarse_score"].shape[-2:]),
    )


def scores_to_probability(score: np.ndarray) -> np.ndarray:
    """Softmax over the 2 channels of an (H,W,2) score map -> foreground probability."""
    t = torch.from_numpy(score)
    return F.softmax(t, dim=-1)[..., 1].numpy()


def randomize_weights(net: TwoStreamNet, std: float = 0.05, seed: int = 0) -> None:
    """Small random weights everywhere (toy configs for gradient checks)."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for conv in net.convs.values():
            conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * std)
            conv.bias.copy_(torch.randn(conv.bias.shape, generator=gen) * std)
