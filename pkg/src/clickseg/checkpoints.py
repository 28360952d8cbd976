"""Weight persistence: a zip container of raw float32 blobs plus a JSON manifest.

Container layout:

    manifest.json          format/version, network config, stride variant,
                           training stage, iteration, preprocessing means/stds,
                           namespace ("tslfn" | "msrn" | "base"), array shapes
    arrays/<name>.f32      raw little-endian float32, C order

Array names are "<layer_id>.weight" / "<layer_id>.bias". Refiner checkpoints
use the "msrn" namespace and record a fingerprint of the frozen base network
they were trained against. Fixed bilinear upsample kernels are reconstructed
from the config and not stored.

`convert_vgg16` ingests the torchvision VGG16 state_dict layout (the publicly
documented "features.N/classifier.N" naming) into a base-weight container,
reshaping the first two dense layers into 7x7 and 1x1 convolutions.
"""

from __future__ import annotations

import json
import zipfile
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .layers import (
    BASE_BLOCKS,
    DEFAULT_CHANNEL_MEANS,
    DEFAULT_CHANNEL_STDS,
    scaled_blocks,
    scaled_fc,
)

FORMAT_NAME = "clickseg-weights"
FORMAT_VERSION = 1


@dataclass
class BaseWeights:
    """Pretrained (or synthetic) base-network weights keyed conv1_1..conv5_3,
    fc6 (conv-shaped 7x7), fc7 (1x1), plus input preprocessing statistics."""

    layers: dict[str, tuple[np.ndarray, np.ndarray]]
    channel_means: tuple[float, float, float] = DEFAULT_CHANNEL_MEANS
    channel_stds: tuple[float, float, float] = DEFAULT_CHANNEL_STDS
    channel_scale: float = 1.0


def base_layer_names() -> list[str]:
    names = []
    for b, (n_convs, _) in enumerate(BASE_BLOCKS, start=1):
        names.extend(f"conv{b}_{i}" for i in range(1, n_convs + 1))
    names.extend(["fc6", "fc7"])
    return names


def save_arrays(path, arrays: Mapping[str, np.ndarray], manifest: dict) -> None:
    manifest = dict(manifest)
    manifest["format"] = FORMAT_NAME
    manifest["version"] = FORMAT_VERSION
    manifest["arrays"] = {name: list(a.shape) for name, a in arrays.items()}
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("manifest.json", json.dumps(manifest, indent=2, sort_keys=True))
        for name, a in arrays.items():
            blob = np.ascontiguousarray(a, dtype="<f4").tobytes()
            zf.writestr(f"arrays/{name}.f32", blob)


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    with zipfile.ZipFile(path, "r") as zf:
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("format") != FORMAT_NAME:
            raise ValueError(f"{path}: not a {FORMAT_NAME} container")
        arrays = {}
        for name, shape in manifest["arrays"].items():
            blob = zf.read(f"arrays/{name}.f32")
            arrays[name] = np.frombuffer(blob, dtype="<f4").reshape(shape).copy()
    return arrays, manifest


def _pack_weights(weights: Mapping[str, tuple[np.ndarray, np.ndarray]]) -> dict[str, np.ndarray]:
    out = {}
    for layer, (w, b) in weights.items():
        out[f"{layer}.weight"] = w
        out[f"{layer}.bias"] = b
    return out


def _unpack_weights(arrays: Mapping[str, np.ndarray]) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    out = {}
    for key, a in arrays.items():
        if key.endswith(".weight"):
            layer = key[: -len(".weight")]
            out[layer] = (a, arrays[f"{layer}.bias"])
    return out


def save_network(path, net, stage: str = "tslfn", iteration: int = 0,
                 extra: dict | None = None) -> None:
    manifest = {
        "namespace": "tslfn",
        "config": net.config.to_dict(),
        "stride_variant": net.config.stride_variant,
        "training_stage": stage,
        "iteration": iteration,
        "channel_means": [float(v) for v in net.channel_means.cpu().numpy()],
        "channel_stds": [float(v) for v in net.channel_stds.cpu().numpy()],
    }
    manifest.update(extra or {})
    save_arrays(path, _pack_weights(net.weights()), manifest)


def load_network(path):
    from .two_stream import NetworkConfig, build

    arrays, manifest = load_arrays(path)
    if manifest.get("namespace") != "tslfn":
        raise ValueError(f"{path}: expected a tslfn checkpoint, got {manifest.get('namespace')}")
    net = build(NetworkConfig.from_dict(manifest["config"]))
    net.load_weights(_unpack_weights(arrays))
    import torch

    with torch.no_grad():
        net.channel_means.copy_(torch.tensor(manifest["channel_means"]))
        net.channel_stds.copy_(torch.tensor(manifest["channel_stds"]))
    return net, manifest


def save_refiner(path, refiner, base_fingerprint: str, stage: str = "msrn",
                 iteration: int = 0, extra: dict | None = None) -> None:
    manifest = {
        "namespace": "msrn",
        "tap_channels": list(refiner.tap_channels),
        "training_stage": stage,
        "iteration": iteration,
        "frozen_base_fingerprint": base_fingerprint,
    }
    manifest.update(extra or {})
    save_arrays(path, _pack_weights(refiner.weights()), manifest)


def load_refiner(path):
    from .refiner import MultiScaleRefiner

    arrays, manifest = load_arrays(path)
    if manifest.get("namespace") != "msrn":
        raise ValueError(f"{path}: expected an msrn checkpoint, got {manifest.get('namespace')}")
    refiner = MultiScaleRefiner(tuple(manifest["tap_channels"]))
    refiner.load_weights(_unpack_weights(arrays))
    return refiner, manifest


def save_base(path, base: BaseWeights) -> None:
    manifest = {
        "namespace": "base",
        "channel_means": list(base.channel_means),
        "channel_stds": list(base.channel_stds),
        "channel_scale": base.channel_scale,
    }
    save_arrays(path, _pack_weights(base.layers), manifest)


def load_base(path) -> BaseWeights:
    arrays, manifest = load_arrays(path)
    if manifest.get("namespace") != "base":
        raise ValueError(f"{path}: expected a base-weight container")
    return BaseWeights(
        layers=_unpack_weights(arrays),
        channel_means=tuple(manifest["channel_means"]),
        channel_stds=tuple(manifest["channel_stds"]),
        channel_scale=manifest.get("channel_scale", 1.0),
    )


def synthetic_base(channel_scale: float = 1.0, seed: int = 0,
                   std: float | None = None) -> BaseWeights:
    """Random base weights with the correct shapes; stands in for the pretrained
    network in desk-scale tests and demos (no external download).

    Weights are fan-in variance-scaled by default (std=None) so the stand-in
    network propagates signal like a trainable one; pass an explicit std to
    override.
    """
    rng = np.random.default_rng(seed)
    blocks = scaled_blocks(channel_scale)
    fc = scaled_fc(channel_scale)

    def conv(out_ch, in_ch, k):
        s = std if std is not None else (2.0 / (in_ch * k * k)) ** 0.5
        return (rng.normal(0, s, size=(out_ch, in_ch, k, k)),
                np.zeros(out_ch) if std is None else rng.normal(0, std, size=(out_ch,)))

    layers: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    in_ch = 3
    for b, (n_convs, out_ch) in enumerate(blocks, start=1):
        for i in range(1, n_convs + 1):
            layers[f"conv{b}_{i}"] = conv(out_ch, in_ch, 3)
            in_ch = out_ch
    layers["fc6"] = conv(fc, in_ch, 7)
    layers["fc7"] = conv(fc, fc, 1)
    return BaseWeights(layers=layers, channel_scale=channel_scale,
                       channel_means=(127.5, 127.5, 127.5), channel_stds=(58.0, 58.0, 58.0))


_TORCHVISION_FEATURES = {
    "conv1_1": 0, "conv1_2": 2,
    "conv2_1": 5, "conv2_2": 7,
    "conv3_1": 10, "conv3_2": 12, "conv3_3": 14,
    "conv4_1": 17, "conv4_2": 19, "conv4_3": 21,
    "conv5_1": 24, "conv5_2": 26, "conv5_3": 28,
}
# torchvision preprocessing: x/255 normalized by ImageNet means/stds, which in
# 0-255 terms is (x - 255*mean) / (255*std)
_TORCHVISION_MEANS = tuple(255.0 * v for v in (0.485, 0.456, 0.406))
_TORCHVISION_STDS = tuple(255.0 * v for v in (0.229, 0.224, 0.225))


def convert_vgg16(src_path, dst_path) -> None:
    """Convert a torchvision VGG16 state_dict (.pth) into a base container."""
    import torch

    state = torch.load(src_path, map_location="cpu", weights_only=True)
    if hasattr(state, "state_dict"):
        state = state.state_dict()
    layers: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for name, idx in _TORCHVISION_FEATURES.items():
        layers[name] = (
            state[f"features.{idx}.weight"].numpy(),
            state[f"features.{idx}.bias"].numpy(),
        )
    fc6_w = state["classifier.0.weight"].numpy().reshape(4096, 512, 7, 7)
    fc7_w = state["classifier.3.weight"].numpy().reshape(4096, 4096, 1, 1)
    layers["fc6"] = (fc6_w, state["classifier.0.bias"].numpy())
    layers["fc7"] = (fc7_w, state["classifier.3.bias"].numpy())
    save_base(dst_path, BaseWeights(
        layers=layers,
        channel_means=_TORCHVISION_MEANS,
        channel_stds=_TORCHVISION_STDS,
        channel_scale=1.0,
    ))
