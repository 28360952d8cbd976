"""Automatic click generation: evaluation sequences and synthetic training clicks.

Evaluation clicking follows the error-driven protocol: find the largest
connected component among false-positive and false-negative regions of the
current segmentation, click the interior point farthest from the component
boundary, with polarity positive on false negatives. Three regimes restrict
which error kinds are admissible.

Conventions fixed here (the cited protocol leaves them open):
- error components use 4-connectivity;
- boundary distance counts the image border as boundary;
- ties on component size break by earliest first pixel in raster order, ties
  on boundary distance by smallest row then smallest column;
- the initial segmentation is all-background, so the first click is positive.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import ndimage

from .interactions import Click, ClickSet, NEGATIVE, POSITIVE

FALSE_POSITIVE = "false_positive"
FALSE_NEGATIVE = "false_negative"


class ClickRegime(Enum):
    FREE_CHOICE = "free_choice"
    ALL_POSITIVE = "all_positive"
    SINGLE_POSITIVE = "single_positive"


class NoErrorRegion(Exception):
    """No admissible error component remains under the active regime."""


class SegmenterFailure(RuntimeError):
    """Segmenter raised during a simulated sequence; carries the click index."""

    def __init__(self, click_index: int, cause: BaseException):
        self.click_index = click_index
        super().__init__(f"segmenter failed at click {click_index}: {cause!r}")


@dataclass(frozen=True)
class ErrorRegion:
    """One 4-connected component of segmentation error."""

    kind: str
    mask: np.ndarray
    size: int
    first_pixel: tuple[int, int]


def _as_mask(a) -> np.ndarray:
    m = np.asarray(a)
    if m.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {m.shape}")
    return m.astype(bool)


def _components(mask: np.ndarray, kind: str) -> list[ErrorRegion]:
    labels, count = ndimage.label(mask)
    regions = []
    for lbl in range(1, count + 1):
        comp = labels == lbl
        flat = int(np.flatnonzero(comp.ravel())[0])
        regions.append(ErrorRegion(kind, comp, int(comp.sum()),
                                   (flat // mask.shape[1], flat % mask.shape[1])))
    return regions


def error_regions(gt_mask, current_mask) -> list[ErrorRegion]:
    """All error components, ordered by the selection rule (largest first)."""
    gt, cur = _as_mask(gt_mask), _as_mask(current_mask)
    if gt.shape != cur.shape:
        raise ValueError(f"mask shapes differ: {gt.shape} vs {cur.shape}")
    regions = _components(gt & ~cur, FALSE_NEGATIVE) + _components(cur & ~gt, FALSE_POSITIVE)
    regions.sort(key=lambda r: (-r.size, r.first_pixel))
    return regions


def boundary_distances(component: np.ndarray) -> np.ndarray:
    """Euclidean distance of each component pixel to the component boundary.

    Boundary means any pixel outside the component; the image border counts.
    Zero outside the component.
    """
    padded = np.pad(component, 1)
    dist = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
    return dist * component


def interior_peak(component: np.ndarray) -> tuple[int, int, float]:
    """Interior point maximizing boundary distance; raster-order tie-break."""
    dist = boundary_distances(component)
    flat = int(np.argmax(dist))
    row, col = flat // component.shape[1], flat % component.shape[1]
    return row, col, float(dist[row, col])


def _admissible_kinds(regime: ClickRegime, clicks_so_far: ClickSet) -> tuple[str, ...]:
    if regime == ClickRegime.ALL_POSITIVE:
        return (FALSE_NEGATIVE,)
    if regime == ClickRegime.SINGLE_POSITIVE:
        return (FALSE_NEGATIVE,) if len(clicks_so_far) == 0 else (FALSE_POSITIVE,)
    return (FALSE_NEGATIVE, FALSE_POSITIVE)


def next_click(gt_mask, current_mask, regime: ClickRegime = ClickRegime.FREE_CHOICE,
               clicks_so_far: ClickSet = ClickSet()) -> Click:
    """Place the next simulated click on the current segmentation error.

    Raises NoErrorRegion when no admissible error component exists.
    """
    kinds = _admissible_kinds(regime, clicks_so_far)
    regions = [r for r in error_regions(gt_mask, current_mask) if r.kind in kinds]
    if not regions:
        raise NoErrorRegion(f"no {'/'.join(kinds)} region left")
    best = regions[0]
    row, col, _ = interior_peak(best.mask)
    polarity = POSITIVE if best.kind == FALSE_NEGATIVE else NEGATIVE
    return Click(row, col, polarity)


def simulate_sequence(segmenter: Callable, image, gt_mask, max_clicks: int = 20,
                      regime: ClickRegime = ClickRegime.FREE_CHOICE,
                      with_clicks: bool = False):
    """Alternate between adding a click and renewing the segmentation.

    `segmenter(image, clicks) -> bool mask`. Returns one (click_count, iou)
    record per click, stopping early when no admissible error region remains.
    With `with_clicks=True` also returns the accumulated ClickSet.
    """
    from .evaluation import iou

    if max_clicks < 0:
        raise ValueError("max_clicks must be >= 0")
    gt = _as_mask(gt_mask)
    current = np.zeros_like(gt)
    clicks = ClickSet()
    records: list[tuple[int, float]] = []
    for k in range(1, max_clicks + 1):
        try:
            click = next_click(gt, current, regime, clicks)
        except NoErrorRegion:
            break
        clicks = clicks.with_click(click)
        try:
            result = segmenter(image, clicks)
        except Exception as exc:
            raise SegmenterFailure(k, exc) from exc
        current = _as_mask(result)
        if current.shape != gt.shape:
            raise SegmenterFailure(k, ValueError(f"segmenter returned shape {current.shape}"))
        records.append((k, iou(current, gt)))
    if with_clicks:
        return records, clicks
    return records


@dataclass(frozen=True)
class ClickSamplerParams:
    """Knobs of the synthetic training-click sampler (artifact defaults)."""

    max_positive: int = 5
    max_negative: int = 10
    min_spacing: float = 10.0
    boundary_margin: float = 5.0
    ring_width: float = 20.0


@dataclass(frozen=True)
class TrainingClicks(ClickSet):
    """Sampled clicks; `fallback_used` marks infeasible-margin fallbacks."""

    fallback_used: bool = False


def _spaced_sample(rng, candidates: np.ndarray, count: int, spacing: float) -> list[tuple[int, int]]:
    """Draw up to `count` points, each at least `spacing` from the previous picks."""
    picked = []
    cand = candidates
    sq = spacing * spacing
    for _ in range(count):
        if cand.shape[0] == 0:
            break
        p = cand[int(rng.integers(cand.shape[0]))]
        picked.append((int(p[0]), int(p[1])))
        cand = cand[((cand - p) ** 2).sum(axis=1) >= sq]
    return picked


def sample_training_clicks(gt_mask, rng_seed: int,
                           params: ClickSamplerParams = ClickSamplerParams(),
                           other_masks: Sequence = ()) -> TrainingClicks:
    """Sample synthetic user clicks for one training object, deterministically.

    Positives: 1..max_positive clicks inside the foreground, pairwise at least
    min_spacing apart and at least boundary_margin from the object boundary
    when feasible. Negatives: 0..max_negative clicks from the background by one
    of three strategies drawn uniformly: a band near the object, uniform
    background, or other-object regions (when such masks are supplied;
    otherwise uniform background). Infeasible margins fall back to
    unconstrained sampling inside the region and set `fallback_used`.
    """
    fg = _as_mask(gt_mask)
    if not fg.any():
        raise ValueError("ground truth has no foreground")
    rng = np.random.default_rng(rng_seed)
    fallback = False

    inner = ndimage.distance_transform_edt(fg)
    safe = fg & (inner >= params.boundary_margin)
    if not safe.any():
        safe = fg
        fallback = True
    n_pos = int(rng.integers(1, params.max_positive + 1))
    positives = _spaced_sample(rng, np.argwhere(safe), n_pos, params.min_spacing)

    negatives: list[tuple[int, int]] = []
    n_neg = int(rng.integers(0, params.max_negative + 1))
    if n_neg > 0:
        bg = ~fg
        if not bg.any():
            fallback = True
        else:
            d_obj = ndimage.distance_transform_edt(bg)
            strategy = int(rng.integers(3))
            if strategy == 0:
                cand = bg & (d_obj >= params.boundary_margin) \
                          & (d_obj <= params.boundary_margin + params.ring_width)
            elif strategy == 2 and len(other_masks) > 0:
                cand = np.zeros_like(bg)
                for m in other_masks:
                    cand |= _as_mask(m)
                cand &= bg
            else:
                cand = bg & (d_obj >= params.boundary_margin)
            if not cand.any():
                cand = bg
                fallback = True
            negatives = _spaced_sample(rng, np.argwhere(cand), n_neg, params.min_spacing)

    clicks = tuple(Click(r, c, POSITIVE) for r, c in positives) \
        + tuple(Click(r, c, NEGATIVE) for r, c in negatives)
    return TrainingClicks(clicks, fallback_used=fallback)


def export_click_log(path, rows: Iterable[dict]) -> None:
    """Write click records (object id, click index, row, col, polarity, iou) as JSON lines."""
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
