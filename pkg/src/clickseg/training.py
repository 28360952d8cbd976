"""Two-stage training: fine-tune the two-stream net, then train the refiner.

Stage 1 ("tslfn") fine-tunes from pretrained base weights with the heavy
scheme (batch 1, momentum 0.99) and climbs the stride ladder 32 -> 16 -> 8,
each rung initialized from the previous one with fresh zero skip-score layers.
Stage 2 ("msrn") trains the refiner from scratch (fan-in random init) with the
base network frozen, foreground-centered cropping for class balance, random
rotation/translation augmentation, dropout, and early stopping on validation
IoU checked every `val_interval` iterations.

The learning rate for stage 1 is an artifact default (only batch size and
momentum are pinned for the heavy scheme); the stage 2 defaults are batch 3,
lr 1e-8, weight decay 5e-4, momentum 0.99, 240x320 resize, validation every
1000 iterations, crop threshold 0.35.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch
from scipy import ndimage
from torch.nn import functional as F

from .checkpoints import BaseWeights
from .datasets import InstanceRecord
from .interactions import ClickSet, InteractionMapPair, encode_clicks
from .refiner import MultiScaleRefiner, build_refiner
from .two_stream import NetworkConfig, TwoStreamNet, init_from_pretrained

STAGES = ("tslfn", "msrn")


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, train_log: "TrainLog"):
        self.iteration = iteration
        self.train_log = train_log
        super().__init__(f"non-finite loss at iteration {iteration}")


@dataclass(frozen=True)
class TrainConfig:
    stage: str = "tslfn"
    batch_size: int = 1
    momentum: float = 0.99
    learning_rate: float = 1e-7
    weight_decay: float = 0.0
    max_iters: int = 100
    val_interval: int = 1000
    patience: int = 5
    resize_dims: tuple[int, int] | None = None
    crop_threshold: float = 0.35
    augment_rotation_prob: float = 0.5
    augment_translation_prob: float = 0.5
    rotation_range_deg: float = 30.0
    translation_frac: float = 0.1
    stride_stages: tuple[int, ...] = (32, 16, 8)
    seed: int = 0

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}")

    @staticmethod
    def tslfn_defaults(**overrides) -> "TrainConfig":
        base = dict(stage="tslfn", batch_size=1, momentum=0.99, learning_rate=1e-7,
                    weight_decay=0.0, resize_dims=None)
        base.update(overrides)
        return TrainConfig(**base)

    @staticmethod
    def msrn_defaults(**overrides) -> "TrainConfig":
        base = dict(stage="msrn", batch_size=3, momentum=0.99, learning_rate=1e-8,
                    weight_decay=5e-4, resize_dims=(240, 320), val_interval=1000,
                    crop_threshold=0.35)
        base.update(overrides)
        return TrainConfig(**base)

    def replace(self, **overrides) -> "TrainConfig":
        return dataclasses.replace(self, **overrides)


def parse_train_config(path) -> TrainConfig:
    """Read the documented `key = value` config format (# starts a comment)."""
    values: dict[str, object] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    stage = str(values.pop("stage", "tslfn"))
    cfg = TrainConfig.msrn_defaults() if stage == "msrn" else TrainConfig.tslfn_defaults()
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    parsed: dict[str, object] = {}
    for key, value in values.items():
        if key not in fields:
            raise ValueError(f"{path}: unknown config key {key!r}")
        parsed[key] = _coerce_field(key, str(value))
    return cfg.replace(**parsed)


def _coerce_field(key: str, value: str):
    if key in ("batch_size", "max_iters", "val_interval", "patience", "seed"):
        return int(value)
    if key in ("momentum", "learning_rate", "weight_decay", "crop_threshold",
               "augment_rotation_prob", "augment_translation_prob",
               "rotation_range_deg", "translation_frac"):
        return float(value)
    if key == "resize_dims":
        if value.lower() in ("none", ""):
            return None
        parts = value.replace("x", ",").split(",")
        return (int(parts[0]), int(parts[1]))
    if key == "stride_stages":
        return tuple(int(v) for v in value.split(","))
    if key == "stage":
        return value
    return value


class TrainLog:
    """Append-only training trail: losses, validations, stop decisions, seeds."""

    def __init__(self, seeds: Mapping[str, int] | None = None):
        self.seeds = dict(seeds or {})
        self.entries: list[dict] = []

    def append(self, **entry) -> None:
        self.entries.append(entry)

    @property
    def losses(self) -> list[tuple[int, float]]:
        return [(e["iter"], e["loss"]) for e in self.entries if "loss" in e]

    @property
    def validations(self) -> list[dict]:
        return [e for e in self.entries if e.get("event") == "validation"]

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(json.dumps({"event": "seeds", **self.seeds}) + "\n")
            for e in self.entries:
                fh.write(json.dumps(e) + "\n")


# -- loss ---------------------------------------------------------------------


def pixelwise_softmax_loss(scores: np.ndarray, gt_mask) -> tuple[float, np.ndarray]:
    """Mean negative log softmax probability of the true class, per pixel.

    scores: (H, W, 2) with channel 1 = foreground. Returns (loss, d loss /
    d scores), gradient = (softmax - one_hot) / (H * W).
    """
    scores = np.asarray(scores, dtype=np.float64)
    gt = np.asarray(gt_mask).astype(bool)
    if scores.ndim != 3 or scores.shape[2] != 2 or scores.shape[:2] != gt.shape:
        raise ValueError(f"scores {scores.shape} incompatible with mask {gt.shape}")
    z = scores - scores.max(axis=2, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=2, keepdims=True))
    log_prob = z - log_norm
    labels = gt.astype(np.int64)
    h, w = gt.shape
    picked = np.take_along_axis(log_prob, labels[:, :, None], axis=2)[:, :, 0]
    loss = float(-picked.mean())
    one_hot = np.zeros_like(scores)
    np.put_along_axis(one_hot, labels[:, :, None], 1.0, axis=2)
    grad = (np.exp(log_prob) - one_hot) / (h * w)
    return loss, grad


def _loss_tensor(score: torch.Tensor, mask: np.ndarray) -> torch.Tensor:
    target = torch.from_numpy(np.asarray(mask).astype(np.int64))[None]
    return F.cross_entropy(score, target, reduction="mean")


# -- sample preparation --------------------------------------------------------


@dataclass
class TrainSample:
    image: np.ndarray
    mask: np.ndarray
    maps: InteractionMapPair


def crop_around_foreground(image, gt_mask, maps: InteractionMapPair,
                           threshold: float = 0.35):
    """Center-crop around the foreground when its bounding box covers less than
    `threshold` of the image; the window is sized so the box covers ~threshold
    of the crop (clamped to image bounds). Applied identically to image, mask
    and interaction maps."""
    gt = np.asarray(gt_mask).astype(bool)
    if not gt.any():
        raise ValueError("empty foreground")
    h, w = gt.shape
    rows = np.flatnonzero(gt.any(axis=1))
    cols = np.flatnonzero(gt.any(axis=0))
    bh = int(rows[-1] - rows[0] + 1)
    bw = int(cols[-1] - cols[0] + 1)
    if (bh * bw) / (h * w) >= threshold:
        return image, gt_mask, maps
    scale = 1.0 / math.sqrt(threshold)
    ch = min(h, int(round(bh * scale)))
    cw = min(w, int(round(bw * scale)))
    cy = (rows[0] + rows[-1] + 1) / 2
    cx = (cols[0] + cols[-1] + 1) / 2
    top = int(np.clip(round(cy - ch / 2), 0, h - ch))
    left = int(np.clip(round(cx - cw / 2), 0, w - cw))
    sl = (slice(top, top + ch), slice(left, left + cw))
    image = np.asarray(image)[sl]
    cropped_maps = InteractionMapPair(maps.positive_map[sl].copy(),
                                      maps.negative_map[sl].copy())
    return image, gt[sl].copy(), cropped_maps


def augment(sample: TrainSample, rng: np.random.Generator,
            rotation_prob: float = 0.5, translation_prob: float = 0.5,
            rotation_range_deg: float = 30.0, translation_frac: float = 0.1) -> TrainSample:
    """Independent coin flips for a random rotation and a random translation,
    applied identically to image, mask (nearest-neighbor) and maps.

    Fill values: image 0, mask background, maps 255 (far from any click).
    """
    image = np.asarray(sample.image, dtype=np.float64)
    mask = np.asarray(sample.mask).astype(bool)
    pos, neg = sample.maps.positive_map, sample.maps.negative_map

    rotate = rng.random() < rotation_prob
    angle = float(rng.uniform(-rotation_range_deg, rotation_range_deg)) if rotate else 0.0
    translate = rng.random() < translation_prob
    if translate:
        h, w = mask.shape
        dy = int(round(rng.uniform(-translation_frac, translation_frac) * h))
        dx = int(round(rng.uniform(-translation_frac, translation_frac) * w))
    else:
        dy = dx = 0

    if not rotate and (dy, dx) == (0, 0):
        return sample

    if rotate and angle != 0.0:
        image = ndimage.rotate(image, angle, axes=(0, 1), reshape=False, order=1,
                               mode="constant", cval=0.0)
        mask = ndimage.rotate(mask.astype(np.uint8), angle, reshape=False, order=0,
                              mode="constant", cval=0).astype(bool)
        pos = ndimage.rotate(pos, angle, reshape=False, order=1,
                             mode="constant", cval=255.0)
        neg = ndimage.rotate(neg, angle, reshape=False, order=1,
                             mode="constant", cval=255.0)
    if (dy, dx) != (0, 0):
        image = _shift2d(image, dy, dx, fill=0.0)
        mask = _shift2d(mask.astype(np.uint8), dy, dx, fill=0).astype(bool)
        pos = _shift2d(pos, dy, dx, fill=255.0)
        neg = _shift2d(neg, dy, dx, fill=255.0)

    pos = np.clip(pos, 0.0, 255.0)
    neg = np.clip(neg, 0.0, 255.0)
    image = np.clip(image, 0.0, 255.0)
    return TrainSample(image, mask, InteractionMapPair(pos, neg))


def _shift2d(a: np.ndarray, dy: int, dx: int, fill):
    out = np.full_like(a, fill)
    h, w = a.shape[:2]
    ys = slice(max(dy, 0), min(h + dy, h))
    xs = slice(max(dx, 0), min(w + dx, w))
    ys_src = slice(max(-dy, 0), min(h - dy, h))
    xs_src = slice(max(-dx, 0), min(w - dx, w))
    out[ys, xs] = a[ys_src, xs_src]
    return out


def resize_sample(sample: TrainSample, dims: tuple[int, int]) -> TrainSample:
    """Bilinear image/map resize, nearest mask resize, to (height, width)."""
    from PIL import Image

    th, tw = dims
    img = Image.fromarray(np.clip(sample.image, 0, 255).astype(np.uint8))
    image = np.asarray(img.resize((tw, th), Image.BILINEAR), dtype=np.float64)
    mask = np.asarray(Image.fromarray(sample.mask.astype(np.uint8) * 255, mode="L")
                      .resize((tw, th), Image.NEAREST)) > 0
    maps = []
    for m in (sample.maps.positive_map, sample.maps.negative_map):
        maps.append(np.asarray(Image.fromarray(m.astype(np.float32), mode="F")
                               .resize((tw, th), Image.BILINEAR), dtype=np.float64))
    return TrainSample(image, mask, InteractionMapPair(maps[0], maps[1]))


# -- training loops ------------------------------------------------------------


def _pick_clicks(clicks_by_id: Mapping, object_id: str,
                 rng: np.random.Generator) -> ClickSet:
    """A value may be one ClickSet or a sequence of sampled variants; training
    draws a variant per visit so the net sees varied interactions per object."""
    entry = clicks_by_id[object_id]
    if isinstance(entry, ClickSet):
        return entry
    return entry[int(rng.integers(len(entry)))]


def _make_sample(record: InstanceRecord, clicks: ClickSet) -> TrainSample:
    image = record.load_image()
    h, w = record.mask.shape
    return TrainSample(image.astype(np.float64), record.mask,
                       encode_clicks(h, w, clicks))


def _sample_tensors(net, sample: TrainSample):
    return net.prepare_inputs(np.clip(sample.image, 0, 255), sample.maps)


def _mean_val_iou(net: TwoStreamNet, refiner, records, clicks_by_id) -> float:
    from .evaluation import iou
    from .refiner import predict

    values = []
    for rec in records:
        entry = clicks_by_id[rec.object_id]
        clicks = entry if isinstance(entry, ClickSet) else entry[0]
        prob = predict(rec.load_image(), encode_clicks(*rec.mask.shape, clicks),
                       net, refiner)
        values.append(iou(prob > 0.5, rec.mask))
    return float(np.mean(values))


def train_tslfn(records: Sequence[InstanceRecord], base: BaseWeights,
                config: TrainConfig, clicks_by_id: Mapping[str, ClickSet],
                net_config: NetworkConfig | None = None,
                val_records: Sequence[InstanceRecord] = (),
                log_path=None) -> tuple[TwoStreamNet, TrainLog]:
    """Stage 1: fine-tune the two-stream net through the stride ladder.

    Each stride rung trains for config.max_iters iterations; later rungs start
    from the previous rung's weights with fresh zero-initialized skip scores.
    """
    if config.stage != "tslfn":
        raise ValueError("config.stage must be 'tslfn'")
    net_config = net_config or NetworkConfig()
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    train_log = TrainLog(seeds={"seed": config.seed})

    net: TwoStreamNet | None = None
    global_iter = 0
    for stride in config.stride_stages:
        stage_cfg = dataclasses.replace(net_config, stride_variant=stride)
        fresh = init_from_pretrained(base, stage_cfg)
        if net is not None:
            fresh.load_weights(net.weights(), strict=False)
        net = fresh
        train_log.append(event="stride_stage", stride=stride, **{"iter": global_iter})
        params = [p for p in net.parameters() if p.requires_grad]
        opt = torch.optim.SGD(params, lr=config.learning_rate,
                              momentum=config.momentum,
                              weight_decay=config.weight_decay)
        net.train()
        order: list[int] = []
        for it in range(1, config.max_iters + 1):
            global_iter += 1
            opt.zero_grad()
            total = 0.0
            for _ in range(config.batch_size):
                if not order:
                    order = list(rng.permutation(len(records)))
                rec = records[order.pop()]
                sample = _make_sample(rec, _pick_clicks(clicks_by_id, rec.object_id, rng))
                if config.resize_dims:
                    sample = resize_sample(sample, config.resize_dims)
                x_img, x_maps = _sample_tensors(net, sample)
                score, _ = net.forward_tensors(x_img, x_maps)
                loss = _loss_tensor(score, sample.mask) / config.batch_size
                loss.backward()
                total += float(loss.detach())
            if not math.isfinite(total):
                train_log.append(event="diverged", **{"iter": global_iter})
                if log_path:
                    train_log.save(log_path)
                raise TrainingDiverged(global_iter, train_log)
            opt.step()
            train_log.append(**{"iter": global_iter, "stride": stride, "loss": total})
            if val_records and config.val_interval and it % config.val_interval == 0:
                val = _mean_val_iou(net, None, val_records, clicks_by_id)
                train_log.append(event="validation", **{"iter": global_iter, "iou": val})
    net.eval()
    if log_path:
        train_log.save(log_path)
    return net, train_log


def train_msrn(records: Sequence[InstanceRecord], net: TwoStreamNet,
               config: TrainConfig, clicks_by_id: Mapping[str, ClickSet],
               val_records: Sequence[InstanceRecord] = (),
               log_path=None) -> tuple[MultiScaleRefiner, TrainLog]:
    """Stage 2: train the refiner from scratch against a frozen base network."""
    if config.stage != "msrn":
        raise ValueError("config.stage must be 'msrn'")
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    train_log = TrainLog(seeds={"seed": config.seed})

    for p in net.parameters():
        p.requires_grad_(False)
    net.eval()
    frozen_before = net.fingerprint()

    refiner = build_refiner(net.config)
    refiner.init_random(config.seed)
    refiner.train()
    opt = torch.optim.SGD(refiner.parameters(), lr=config.learning_rate,
                          momentum=config.momentum, weight_decay=config.weight_decay)

    best_iou = -1.0
    best_weights = None
    best_iter = 0
    stall = 0
    order: list[int] = []
    stopped_early = False
    for it in range(1, config.max_iters + 1):
        opt.zero_grad()
        total = 0.0
        for _ in range(config.batch_size):
            if not order:
                order = list(rng.permutation(len(records)))
            rec = records[order.pop()]
            sample = _make_sample(rec, _pick_clicks(clicks_by_id, rec.object_id, rng))
            image, mask, maps = crop_around_foreground(
                sample.image, sample.mask, sample.maps, config.crop_threshold)
            sample = TrainSample(image, mask, maps)
            if config.resize_dims:
                sample = resize_sample(sample, config.resize_dims)
            sample = augment(sample, rng,
                             rotation_prob=config.augment_rotation_prob,
                             translation_prob=config.augment_translation_prob,
                             rotation_range_deg=config.rotation_range_deg,
                             translation_frac=config.translation_frac)
            x_img, x_maps = _sample_tensors(net, sample)
            with torch.no_grad():
                _, taps = net.forward_tensors(x_img, x_maps)
            feats = [taps[f"feat{b}"].detach() for b in range(1, 6)]
            score_full = taps["score_full"].detach()
            refined = refiner.forward_tensors(feats, score_full)
            loss = _loss_tensor(refined, sample.mask) / config.batch_size
            loss.backward()
            total += float(loss.detach())
        if not math.isfinite(total):
            train_log.append(event="diverged", **{"iter": it})
            if log_path:
                train_log.save(log_path)
            raise TrainingDiverged(it, train_log)
        opt.step()
        train_log.append(**{"iter": it, "loss": total})

        if val_records and config.val_interval and it % config.val_interval == 0:
            refiner.eval()
            val = _mean_val_iou(net, refiner, val_records, clicks_by_id)
            refiner.train()
            improved = val > best_iou
            if improved:
                best_iou = val
                best_weights = refiner.weights()
                best_iter = it
                stall = 0
            else:
                stall += 1
            train_log.append(event="validation", **{"iter": it, "iou": val},
                             best=improved, stall=stall)
            if stall >= config.patience:
                train_log.append(event="early_stop", **{"iter": it},
                                 best_iter=best_iter, best_iou=best_iou)
                stopped_early = True
                break

    if best_weights is not None:
        refiner.load_weights(best_weights)
        if not stopped_early:
            train_log.append(event="restored_best", best_iter=best_iter, best_iou=best_iou)
    refiner.eval()
    if net.fingerprint() != frozen_before:
        raise RuntimeError("frozen base network changed during refiner training")
    if log_path:
        train_log.save(log_path)
    return refiner, train_log
