"""A tour of the segmentation network: streams, fusion, stride variants, taps.

Runs at a reduced channel scale so everything is instant on a laptop CPU; the
architecture (layer inventory, wiring, init surgery) is identical at full scale.
"""

import numpy as np

from clickseg.checkpoints import synthetic_base
from clickseg.interactions import Click, ClickSet, POSITIVE, NEGATIVE, encode_clicks
from clickseg.two_stream import (
    NetworkConfig,
    build,
    forward,
    init_from_pretrained,
    scores_to_probability,
)

SCALE = 0.125  # 1/8 of the reference channel counts

config = NetworkConfig(split_index=4, stride_variant=8, channel_scale=SCALE)
base = synthetic_base(SCALE, seed=0)
net = init_from_pretrained(base, config)

print("layer inventory (name, weight shape):")
for name, shape in net.describe():
    print(f"  {name:16s} {shape}")

# Init surgery: the interaction stream's first conv is the channel-mean of the
# base first conv, the first fusion conv is the base layer copied into both
# halves of its doubled input, and every score layer starts at zero.
w_int = net.convs["conv1_1_s2"].weight.detach().numpy()
w_base = base.layers["conv1_1"][0]
print("\ninteraction conv1_1 equals base channel mean:",
      np.allclose(w_int, np.repeat(w_base.mean(axis=1, keepdims=True), 2, axis=1)))
w_fuse = net.convs["conv5_1"].weight.detach().numpy()
half = w_fuse.shape[1] // 2
print("fusion conv5_1 halves equal base conv5_1:",
      np.allclose(w_fuse[:, :half], base.layers["conv5_1"][0])
      and np.allclose(w_fuse[:, half:], base.layers["conv5_1"][0]))
print("score conv is all zero:", float(abs(net.convs['score'].weight).max()) == 0.0)

# A fresh network is maximally undecided: probability 0.5 everywhere.
image = np.random.default_rng(0).integers(0, 255, size=(240, 320, 3)).astype(np.uint8)
maps = encode_clicks(240, 320, ClickSet.of(Click(100, 150, POSITIVE), Click(20, 20, NEGATIVE)))
score, bundle = forward(net, image, maps)
prob = scores_to_probability(score)
print("\nfresh network probability is flat 0.5:", float(abs(prob - 0.5).max()) <= 1e-6)

# Shape contract: full-resolution output, documented internal grid.
print("output score map:", score.shape)
print("stride-32 internal grid for 240x320:", bundle.coarse_grid)
print("feature taps (downsample factor -> shape):")
for feat, factor in zip(bundle.features, bundle.factors):
    print(f"  {factor:2d}x -> {feat.shape}")

# Ablation variants share the same build surface.
single = build(NetworkConfig(ablation="single_stream", channel_scale=SCALE))
removed = build(NetworkConfig(ablation="stream_removed", channel_scale=SCALE))
print("\nsingle-stream first conv input channels:", single.convs["conv1_1_s1"].weight.shape[1])
print("stream-removed fusion input channels:", removed.convs["conv5_1"].weight.shape[1])
