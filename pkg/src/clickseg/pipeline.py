"""End-to-end segmenter: clicks -> interaction maps -> network -> graph cut."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph_cut import GraphCutParams, graphcut_refine
from .interactions import ClickSet, encode_clicks
from .refiner import MultiScaleRefiner, predict
from .two_stream import TwoStreamNet


@dataclass
class SegmenterPipeline:
    """Callable segmentation pipeline over a trained network.

    `graph_cut=None` replaces the energy-minimizing post-processing with plain
    0.5 thresholding. Instances are valid `segmenter(image, clicks)` callables
    for the click-simulation benchmark.
    """

    net: TwoStreamNet
    refiner: MultiScaleRefiner | None = None
    graph_cut: GraphCutParams | None = None

    def probability(self, image, clicks: ClickSet) -> np.ndarray:
        h, w = np.asarray(image).shape[:2]
        maps = encode_clicks(h, w, clicks)
        return predict(image, maps, self.net, self.refiner)

    def mask(self, image, clicks: ClickSet) -> np.ndarray:
        prob = self.probability(image, clicks)
        if self.graph_cut is None:
            return prob > 0.5
        return graphcut_refine(prob, image, clicks, self.graph_cut)

    def mask_from_probability(self, prob: np.ndarray, image, clicks: ClickSet) -> np.ndarray:
        if self.graph_cut is None:
            return prob > 0.5
        return graphcut_refine(prob, image, clicks, self.graph_cut)

    def __call__(self, image, clicks: ClickSet) -> np.ndarray:
        return self.mask(image, clicks)
