"""Encoding of user clicks into two-channel distance interaction maps.

A click set is turned into one map per polarity, where each pixel holds the
minimum Euclidean distance to the clicks of that polarity, saturated at 255.
A polarity with no clicks yields an all-255 map. Maps are kept real-valued;
quantization to 8-bit happens only on image export.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

POSITIVE = "positive"
NEGATIVE = "negative"
MAP_CAP = 255.0


class ClickOutOfBounds(ValueError):
    """A click falls outside the image grid."""

    def __init__(self, click: "Click", height: int, width: int):
        self.click = click
        super().__init__(f"click {click} outside {height}x{width} image")


@dataclass(frozen=True, order=True)
class Click:
    """A single user interaction at integer pixel coordinates (row, col)."""

    row: int
    col: int
    polarity: str

    def __post_init__(self):
        if self.polarity not in (POSITIVE, NEGATIVE):
            raise ValueError(f"polarity must be {POSITIVE!r} or {NEGATIVE!r}, got {self.polarity!r}")

    @property
    def is_positive(self) -> bool:
        return self.polarity == POSITIVE


@dataclass(frozen=True)
class ClickSet:
    """An ordered, duplicate-free collection of clicks (insertion order = user order)."""

    clicks: tuple[Click, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "clicks", tuple(self.clicks))
        seen = set()
        for c in self.clicks:
            key = (c.row, c.col, c.polarity)
            if key in seen:
                raise ValueError(f"duplicate click {c}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.clicks)

    def __iter__(self) -> Iterator[Click]:
        return iter(self.clicks)

    def with_click(self, click: Click) -> "ClickSet":
        """New set with `click` appended; appending an exact duplicate is a no-op."""
        if (click.row, click.col, click.polarity) in {(c.row, c.col, c.polarity) for c in self.clicks}:
            return ClickSet(self.clicks)
        return ClickSet(self.clicks + (click,))

    def without_last(self) -> "ClickSet":
        return ClickSet(self.clicks[:-1])

    def positive(self) -> tuple[Click, ...]:
        return tuple(c for c in self.clicks if c.is_positive)

    def negative(self) -> tuple[Click, ...]:
        return tuple(c for c in self.clicks if not c.is_positive)

    @staticmethod
    def of(*clicks: Click) -> "ClickSet":
        return ClickSet(tuple(clicks))


@dataclass(frozen=True)
class InteractionMapPair:
    """Positive and negative distance maps, same shape as the image, values in [0, 255]."""

    positive_map: np.ndarray
    negative_map: np.ndarray

    def __post_init__(self):
        if self.positive_map.shape != self.negative_map.shape or self.positive_map.ndim != 2:
            raise ValueError("maps must be two matching 2-D arrays")

    @property
    def height(self) -> int:
        return self.positive_map.shape[0]

    @property
    def width(self) -> int:
        return self.positive_map.shape[1]

    def stacked(self) -> np.ndarray:
        """(2, H, W) array, positive channel first."""
        return np.stack([self.positive_map, self.negative_map])

    def as_uint8(self) -> tuple[np.ndarray, np.ndarray]:
        """Nearest-integer 8-bit quantization, for image export only."""
        return (
            np.rint(self.positive_map).astype(np.uint8),
            np.rint(self.negative_map).astype(np.uint8),
        )


def _check_bounds(clicks: Iterable[Click], height: int, width: int) -> None:
    for c in clicks:
        if not (0 <= c.row < height and 0 <= c.col < width):
            raise ClickOutOfBounds(c, height, width)


def _distance_field(height: int, width: int, clicks: Iterable[Click]) -> np.ndarray:
    """Min Euclidean distance to any of `clicks`, capped at MAP_CAP; all-cap when empty."""
    out = np.full((height, width), MAP_CAP, dtype=np.float64)
    rows = np.arange(height, dtype=np.float64)[:, None]
    cols = np.arange(width, dtype=np.float64)[None, :]
    for c in clicks:
        d = np.sqrt((rows - c.row) ** 2 + (cols - c.col) ** 2)
        np.minimum(out, d, out=out)
    return out


def encode_clicks(height: int, width: int, clicks: ClickSet) -> InteractionMapPair:
    """Encode a click set into its positive/negative distance-map pair.

    Raises ClickOutOfBounds for clicks outside the grid and ValueError for a
    zero-sized image.
    """
    if height < 1 or width < 1:
        raise ValueError(f"image must be at least 1x1, got {height}x{width}")
    _check_bounds(clicks, height, width)
    return InteractionMapPair(
        positive_map=_distance_field(height, width, clicks.positive()),
        negative_map=_distance_field(height, width, clicks.negative()),
    )


def incremental_update(pair: InteractionMapPair, new_click: Click) -> InteractionMapPair:
    """Fold one more click into an existing pair.

    Equivalent to re-encoding the augmented click set: the matching-polarity
    map is the element-wise min of the old map and the new click's distance
    field (the all-255 empty map absorbs the first click of a polarity).
    """
    _check_bounds([new_click], pair.height, pair.width)
    d = _distance_field(pair.height, pair.width, [new_click])
    if new_click.is_positive:
        return InteractionMapPair(np.minimum(pair.positive_map, d), pair.negative_map)
    return InteractionMapPair(pair.positive_map, np.minimum(pair.negative_map, d))


def save_map_pngs(pair: InteractionMapPair, positive_path, negative_path) -> None:
    """Debug export of both maps as 8-bit grayscale PNGs."""
    from PIL import Image

    pos, neg = pair.as_uint8()
    Image.fromarray(pos, mode="L").save(positive_path)
    Image.fromarray(neg, mode="L").save(negative_path)
