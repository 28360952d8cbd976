"""Automatic clicking: how evaluation sequences and training clicks are made.

The evaluation oracle always clicks the largest remaining error region at its
most interior point; the training sampler scatters positives inside the object
and negatives around it.
"""

import numpy as np

from clickseg.click_oracle import (
    ClickRegime,
    ClickSamplerParams,
    next_click,
    sample_training_clicks,
    simulate_sequence,
)
from clickseg.service import DistanceFieldPipeline

# Ground truth: an L-shaped object.
gt = np.zeros((60, 60), dtype=bool)
gt[10:50, 10:25] = True
gt[35:50, 10:50] = True

# Starting from an empty segmentation the first click lands deep inside the object.
first = next_click(gt, np.zeros_like(gt))
print("first click:", (first.row, first.col), first.polarity)

# Drive a full sequence against a simple distance-based segmenter.
pipeline = DistanceFieldPipeline()


def segmenter(image, clicks):
    return pipeline.mask_from_probability(pipeline.probability(image, clicks), image, clicks)


image = np.zeros((60, 60, 3), dtype=np.uint8)
records, clicks = simulate_sequence(segmenter, image, gt, max_clicks=8,
                                    regime=ClickRegime.FREE_CHOICE, with_clicks=True)
print("\nfree-choice sequence:")
for (k, iou_value), click in zip(records, clicks):
    print(f"  click {k}: ({click.row:2d},{click.col:2d}) {click.polarity:8s} -> IoU {iou_value:.3f}")

# The all-positive regime refuses to place background clicks.
records_ap, clicks_ap = simulate_sequence(segmenter, image, gt, max_clicks=8,
                                          regime=ClickRegime.ALL_POSITIVE, with_clicks=True)
print("\nall-positive polarities:", sorted({c.polarity for c in clicks_ap}))

# Synthetic training clicks: deterministic per seed, positives inside, negatives outside.
sampled = sample_training_clicks(gt, rng_seed=3,
                                 params=ClickSamplerParams(min_spacing=8, boundary_margin=3))
print("\nsampled training clicks (seed 3):")
for c in sampled:
    inside = gt[c.row, c.col]
    print(f"  ({c.row:2d},{c.col:2d}) {c.polarity:8s} inside-object={bool(inside)}")
print("same seed reproduces the set:",
      sample_training_clicks(gt, rng_seed=3,
                             params=ClickSamplerParams(min_spacing=8, boundary_margin=3)).clicks
      == sampled.clicks)
