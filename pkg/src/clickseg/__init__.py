"""Click-guided interactive image segmentation workbench.

Library layout:

- interactions: click types and distance-map encoding
- click_oracle: simulated clicking for evaluation and synthetic training clicks
- two_stream / refiner: the segmentation networks (coarse two-stream net and
  full-resolution multi-scale refiner)
- training: pixel loss, crop/augment pipeline, and the two-stage trainer
- graph_cut: energy-minimizing binary post-processing of probability maps
- evaluation: IoU metrics, click-effort curves, decidability index, benchmark
- datasets: ingestion, partitioning, click caching, synthetic desk-scale corpus
- checkpoints: weight container and pretrained-base conversion
- service: HTTP annotation service
"""

from .interactions import (
    Click,
    ClickOutOfBounds,
    ClickSet,
    InteractionMapPair,
    MAP_CAP,
    NEGATIVE,
    POSITIVE,
    encode_clicks,
    incremental_update,
    save_map_pngs,
)
from .click_oracle import (
    ClickRegime,
    ClickSamplerParams,
    NoErrorRegion,
    next_click,
    sample_training_clicks,
    simulate_sequence,
)
from .evaluation import (
    DIStats,
    EvalRecord,
    decidability_index,
    iou,
    iou_curve,
    mean_clicks_to_iou,
    run_benchmark,
)
from .graph_cut import GraphCutParams, graphcut_refine

__all__ = [
    "Click",
    "ClickOutOfBounds",
    "ClickRegime",
    "ClickSamplerParams",
    "ClickSet",
    "DIStats",
    "EvalRecord",
    "GraphCutParams",
    "InteractionMapPair",
    "MAP_CAP",
    "NEGATIVE",
    "NoErrorRegion",
    "POSITIVE",
    "decidability_index",
    "encode_clicks",
    "graphcut_refine",
    "incremental_update",
    "iou",
    "iou_curve",
    "mean_clicks_to_iou",
    "next_click",
    "run_benchmark",
    "sample_training_clicks",
    "save_map_pngs",
    "simulate_sequence",
]

__version__ = "0.1.0"
