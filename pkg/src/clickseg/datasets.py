"""Dataset ingestion, partitioning, synthetic-click caching, and a bundled
desk-scale synthetic corpus.

Supported layouts:

- ``voc_instances``: ``JPEGImages/<id>.jpg`` + ``SegmentationObject/<id>.png``
  indexed masks (0 = background, 255 = void/boundary, k = instance k). Each
  instance becomes one record; void pixels are excluded from both foreground
  and IoU union.
- ``mask_per_object``: ``images/<id>.png`` + ``masks/<id>__<obj>.png`` binary
  masks (any nonzero pixel is foreground).

The synthetic corpus (`make_synthetic_dataset`) writes random
ellipse/rectangle/polygon objects with exact analytic masks and distinct
foreground/background colors, so the whole test suite runs without external
downloads.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .click_oracle import ClickSamplerParams, sample_training_clicks
from .interactions import Click, ClickSet

log = logging.getLogger(__name__)

LAYOUTS = ("voc_instances", "mask_per_object")


@dataclass
class InstanceRecord:
    """One object instance: image path plus its binary mask (and optional void mask)."""

    image_path: Path
    mask: np.ndarray
    dataset_id: str
    object_id: str
    void: np.ndarray | None = None

    def __post_init__(self):
        self.mask = np.asarray(self.mask).astype(bool)
        if not self.mask.any():
            raise ValueError(f"{self.object_id}: empty instance mask")

    def load_image(self) -> np.ndarray:
        img = Image.open(self.image_path).convert("RGB")
        arr = np.asarray(img, dtype=np.uint8)
        if arr.shape[:2] != self.mask.shape:
            raise ValueError(f"{self.object_id}: image {arr.shape[:2]} vs mask {self.mask.shape}")
        return arr


@dataclass(frozen=True)
class DataPartition:
    train_ids: tuple[str, ...]
    val_ids: tuple[str, ...]
    test_ids: tuple[str, ...] = ()

    def __post_init__(self):
        sets = [set(self.train_ids), set(self.val_ids), set(self.test_ids)]
        for i in range(len(sets)):
            for j in range(i + 1, len(sets)):
                if sets[i] & sets[j]:
                    raise ValueError("partition sets overlap")


def _load_mask_array(path) -> np.ndarray:
    return np.asarray(Image.open(path))


def ingest(root, layout: str) -> list[InstanceRecord]:
    """One record per object instance, sorted by image path then object index.

    Unreadable or malformed files are logged and skipped; an empty result is an
    error.
    """
    root = Path(root)
    if not root.exists():
        raise FileNotFoundError(root)
    if layout not in LAYOUTS:
        raise ValueError(f"layout must be one of {LAYOUTS}")
    records: list[InstanceRecord] = []
    dataset_id = root.name

    if layout == "voc_instances":
        ann_dir = root / "SegmentationObject"
        img_dir = root / "JPEGImages"
        for ann_path in sorted(ann_dir.glob("*.png")):
            stem = ann_path.stem
            image_path = None
            for ext in (".jpg", ".jpeg", ".png"):
                cand = img_dir / f"{stem}{ext}"
                if cand.exists():
                    image_path = cand
                    break
            if image_path is None:
                log.warning("no image for annotation %s", ann_path)
                continue
            try:
                ann = _load_mask_array(ann_path)
            except Exception as exc:
                log.warning("unreadable annotation %s: %s", ann_path, exc)
                continue
            if ann.ndim != 2:
                log.warning("malformed annotation %s: shape %s", ann_path, ann.shape)
                continue
            void = ann == 255
            ids = sorted(int(v) for v in np.unique(ann) if v not in (0, 255))
            if not ids:
                log.warning("annotation %s has no instances (void/background only)", ann_path)
            for obj in ids:
                mask = ann == obj
                records.append(InstanceRecord(
                    image_path=image_path, mask=mask, dataset_id=dataset_id,
                    object_id=f"{stem}#{obj}", void=void))
    else:
        img_dir = root / "images"
        mask_dir = root / "masks"
        for mask_path in sorted(mask_dir.glob("*.png")):
            stem, _, obj = mask_path.stem.partition("__")
            image_path = None
            for ext in (".png", ".jpg", ".jpeg"):
                cand = img_dir / f"{stem}{ext}"
                if cand.exists():
                    image_path = cand
                    break
            if image_path is None:
                log.warning("no image for mask %s", mask_path)
                continue
            try:
                arr = _load_mask_array(mask_path)
            except Exception as exc:
                log.warning("unreadable mask %s: %s", mask_path, exc)
                continue
            if arr.ndim != 2:
                log.warning("malformed mask %s: shape %s", mask_path, arr.shape)
                continue
            mask = arr > 0
            if not mask.any():
                log.warning("mask %s has no foreground, skipped", mask_path)
                continue
            records.append(InstanceRecord(
                image_path=image_path, mask=mask, dataset_id=dataset_id,
                object_id=f"{stem}#{obj or '1'}"))

    if not records:
        raise ValueError(f"no instances found under {root} with layout {layout}")
    return records


def partition(records: Sequence[InstanceRecord], seed: int,
              val_count: int = 200) -> DataPartition:
    """Image-level train/validation split (all instances of an image stay
    together); deterministic per seed."""
    by_image: dict[str, list[str]] = {}
    for r in records:
        by_image.setdefault(str(r.image_path), []).append(r.object_id)
    images = sorted(by_image)
    if val_count >= len(images):
        raise ValueError(f"val_count {val_count} must be smaller than the "
                         f"image pool ({len(images)})")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(images))
    val_imgs = {images[i] for i in order[:val_count]}
    train_ids, val_ids = [], []
    for img in images:
        target = val_ids if img in val_imgs else train_ids
        target.extend(by_image[img])
    return DataPartition(tuple(train_ids), tuple(val_ids))


# -- synthetic click cache ---------------------------------------------------


class ClickCache:
    """Persistent per-object synthetic clicks keyed by (object id, seed, params).

    Backed by a JSON-lines file; corrupt or stale entries are regenerated (with
    a warning) without touching the rest. `sampler_calls` counts actual sampler
    invocations, so cache hits are observable.
    """

    def __init__(self, path, params: ClickSamplerParams, seed: int):
        self.path = Path(path)
        self.params = params
        self.seed = seed
        self.sampler_calls = 0
        self._entries: dict[str, ClickSet] = {}
        if self.path.exists():
            self._load()

    def _params_key(self) -> dict:
        return {
            "max_positive": self.params.max_positive,
            "max_negative": self.params.max_negative,
            "min_spacing": self.params.min_spacing,
            "boundary_margin": self.params.boundary_margin,
            "ring_width": self.params.ring_width,
        }

    def _load(self) -> None:
        for line in self.path.read_text().splitlines():
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                if row["seed"] != self.seed or row["params"] != self._params_key():
                    log.warning("click cache entry %s has stale seed/params, ignoring",
                                row.get("object_id"))
                    continue
                clicks = ClickSet(tuple(
                    Click(int(r), int(c), pol) for r, c, pol in row["clicks"]))
                self._entries[row["object_id"]] = clicks
            except Exception as exc:
                log.warning("corrupt click cache line ignored: %s", exc)

    def _append(self, object_id: str, clicks: ClickSet) -> None:
        row = {
            "object_id": object_id,
            "seed": self.seed,
            "params": self._params_key(),
            "clicks": [[c.row, c.col, c.polarity] for c in clicks],
        }
        with open(self.path, "a") as fh:
            fh.write(json.dumps(row) + "\n")

    def _object_seed(self, object_id: str) -> int:
        # stable per-object stream derived from the cache seed
        return int(np.random.SeedSequence([self.seed, _stable_hash(object_id)])
                   .generate_state(1)[0])

    def get(self, record: InstanceRecord) -> ClickSet:
        if record.object_id in self._entries:
            return self._entries[record.object_id]
        self.sampler_calls += 1
        clicks = sample_training_clicks(record.mask, self._object_seed(record.object_id),
                                        self.params)
        plain = ClickSet(clicks.clicks)
        self._entries[record.object_id] = plain
        self._append(record.object_id, plain)
        return plain


def _stable_hash(text: str) -> int:
    import hashlib

    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "little")


def cache_clicks(records: Sequence[InstanceRecord], params: ClickSamplerParams,
                 seed: int, path) -> ClickCache:
    """Materialize a click cache for every record (idempotent on reload)."""
    cache = ClickCache(path, params, seed)
    for r in records:
        cache.get(r)
    return cache


def sample_click_variants(records: Sequence[InstanceRecord],
                          params: ClickSamplerParams, seed: int,
                          count: int = 4) -> dict[str, tuple[ClickSet, ...]]:
    """Several independent synthetic click sets per object (deterministic).

    Feeding variants to the trainer exposes each object under varied
    interactions instead of one memorizable pattern.
    """
    out: dict[str, tuple[ClickSet, ...]] = {}
    for r in records:
        variants = []
        for k in range(count):
            s = int(np.random.SeedSequence([seed, k, _stable_hash(r.object_id)])
                    .generate_state(1)[0])
            clicks = sample_training_clicks(r.mask, s, params)
            variants.append(ClickSet(clicks.clicks))
        out[r.object_id] = tuple(variants)
    return out


# -- synthetic corpus ---------------------------------------------------------


def _shape_mask(rng, h, w) -> np.ndarray:
    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    kind = rng.integers(3)
    cy = rng.uniform(0.35, 0.65) * h
    cx = rng.uniform(0.35, 0.65) * w
    if kind == 0:  # ellipse
        ry = rng.uniform(0.22, 0.38) * h
        rx = rng.uniform(0.22, 0.38) * w
        mask = ((rows - cy) / ry) ** 2 + ((cols - cx) / rx) ** 2 <= 1.0
    elif kind == 1:  # axis-aligned rectangle
        ry = rng.uniform(0.2, 0.35) * h
        rx = rng.uniform(0.2, 0.35) * w
        mask = (np.abs(rows - cy) <= ry) & (np.abs(cols - cx) <= rx)
    else:  # convex polygon: intersection of random half-planes around center
        mask = np.ones((h, w), dtype=bool)
        n_sides = int(rng.integers(3, 7))
        radius = rng.uniform(0.25, 0.4) * min(h, w)
        phase = rng.uniform(0, 2 * np.pi)
        for k in range(n_sides):
            ang = phase + 2 * np.pi * k / n_sides
            ny, nx = np.sin(ang), np.cos(ang)
            mask &= (rows - cy) * ny + (cols - cx) * nx <= radius
    return mask


def make_synthetic_dataset(root, count: int = 5, size: tuple[int, int] = (96, 96),
                           seed: int = 0, noise: float = 4.0) -> Path:
    """Write a tiny mask_per_object corpus of random shapes with exact masks."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    h, w = size
    for i in range(count):
        mask = _shape_mask(rng, h, w)
        while not 0.08 <= mask.mean() <= 0.75:
            mask = _shape_mask(rng, h, w)
        bg = rng.integers(20, 110, size=3)
        fg = rng.integers(140, 235, size=3)
        image = np.empty((h, w, 3), dtype=np.float64)
        image[:] = bg
        image[mask] = fg
        image += rng.normal(0, noise, size=image.shape)
        image = np.clip(np.rint(image), 0, 255).astype(np.uint8)
        Image.fromarray(image).save(root / "images" / f"shape{i:03d}.png")
        Image.fromarray((mask * 255).astype(np.uint8), mode="L").save(
            root / "masks" / f"shape{i:03d}__1.png")
    return root


def export_mask_png(mask: np.ndarray, path) -> None:
    Image.fromarray((np.asarray(mask, dtype=bool) * 255).astype(np.uint8), mode="L").save(path)
