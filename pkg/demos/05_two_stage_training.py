"""Desk-scale two-stage training on the bundled synthetic corpus.

Stage 1 fine-tunes the two-stream network through the stride ladder
32 -> 16 -> 8; stage 2 trains the full-resolution refiner with the base
network frozen. Takes a few minutes on a laptop CPU. (Full-scale training on
real datasets uses the same code path via `clickseg train` with a converted
pretrained base.)
"""

import tempfile
import time
from pathlib import Path

import numpy as np
import torch

from clickseg.checkpoints import save_network, save_refiner, synthetic_base
from clickseg.click_oracle import ClickSamplerParams, simulate_sequence
from clickseg.datasets import ingest, make_synthetic_dataset, sample_click_variants
from clickseg.graph_cut import GraphCutParams
from clickseg.pipeline import SegmenterPipeline
from clickseg.training import TrainConfig, train_msrn, train_tslfn
from clickseg.two_stream import NetworkConfig

torch.set_num_threads(2)
SCALE = 0.125

root = Path(tempfile.mkdtemp(prefix="clickseg_demo_"))
make_synthetic_dataset(root, count=5, size=(64, 64), seed=42)
records = ingest(root, "mask_per_object")
clicks = sample_click_variants(records, ClickSamplerParams(min_spacing=8, boundary_margin=3),
                               seed=7, count=6)
print(f"corpus: {len(records)} objects under {root}")

# Stage 1: heavy scheme (batch 1, momentum 0.99) from a synthetic base.
base = synthetic_base(SCALE, seed=1)
stage1 = TrainConfig.tslfn_defaults(learning_rate=3e-4, max_iters=250, seed=9)
t0 = time.time()
net, log1 = train_tslfn(records, base, stage1, clicks,
                        net_config=NetworkConfig(channel_scale=SCALE))
print(f"stage 1: {time.time() - t0:.0f}s, loss {log1.losses[0][1]:.3f} -> {log1.losses[-1][1]:.4f}")


def mean_iou_at_3_clicks(pipe):
    vals = []
    for r in records:
        steps = simulate_sequence(pipe, r.load_image(), r.mask, max_clicks=3)
        vals.append(steps[-1][1] if steps else 1.0)
    return float(np.mean(vals))


frozen = mean_iou_at_3_clicks(SegmenterPipeline(net=net, graph_cut=GraphCutParams(lambda_=2.0)))
print(f"stage-1 pipeline, mean IoU after 3 simulated clicks: {frozen:.3f}")

# Stage 2: refiner from scratch, base frozen; early stopping on validation IoU.
stage2 = TrainConfig.msrn_defaults(learning_rate=3e-4, max_iters=300, val_interval=50,
                                   patience=4, resize_dims=None, seed=11)
t0 = time.time()
refiner, log2 = train_msrn(records, net, stage2, clicks, val_records=records)
print(f"stage 2: {time.time() - t0:.0f}s, validations: "
      f"{[(e['iter'], round(e['iou'], 3)) for e in log2.validations]}")

refined = mean_iou_at_3_clicks(SegmenterPipeline(net=net, refiner=refiner,
                                                 graph_cut=GraphCutParams(lambda_=2.0)))
print(f"two-stage pipeline, mean IoU after 3 simulated clicks: {refined:.3f}")

out = Path("demo_out")
out.mkdir(exist_ok=True)
save_network(out / "demo_net.ckpt", net, stage="tslfn", iteration=stage1.max_iters)
save_refiner(out / "demo_refiner.ckpt", refiner, base_fingerprint=net.fingerprint(),
             iteration=stage2.max_iters)
print("checkpoints written to", out)
