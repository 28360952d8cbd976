"""Click encoding: from user clicks to the two-channel distance maps.

Each map holds, per pixel, the minimum Euclidean distance to the clicks of one
polarity, saturated at 255; a polarity with no clicks gives an all-255 map.
"""

from pathlib import Path

import numpy as np

from clickseg.interactions import (
    Click,
    ClickSet,
    POSITIVE,
    NEGATIVE,
    encode_clicks,
    incremental_update,
    save_map_pngs,
)

out = Path("demo_out")
out.mkdir(exist_ok=True)

# A 200x200 canvas with two positive clicks and one negative one.
clicks = ClickSet.of(
    Click(60, 80, POSITIVE),
    Click(120, 110, POSITIVE),
    Click(170, 30, NEGATIVE),
)
pair = encode_clicks(200, 200, clicks)

print("positive map: min", pair.positive_map.min(), "max", pair.positive_map.max())
print("value at a positive click:", pair.positive_map[60, 80])
print("value far away is capped:", pair.positive_map[0, 199] == 255.0 or pair.positive_map[0, 199])

# No negative clicks -> the whole negative channel saturates at 255.
only_pos = encode_clicks(200, 200, ClickSet.of(Click(10, 10, POSITIVE)))
print("negative map with no negative clicks is all-255:", bool((only_pos.negative_map == 255).all()))

# The live service never re-encodes from scratch: a new click folds in as an
# element-wise min. The result is identical to a full re-encode.
extra = Click(40, 160, NEGATIVE)
fast = incremental_update(pair, extra)
slow = encode_clicks(200, 200, clicks.with_click(extra))
print("incremental == full re-encode:", np.array_equal(fast.negative_map, slow.negative_map))

# 8-bit grayscale export for eyeballing.
save_map_pngs(fast, out / "map_positive.png", out / "map_negative.png")
print("wrote", out / "map_positive.png", "and", out / "map_negative.png")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(8, 4))
    for ax, (m, title) in zip(axes, [(fast.positive_map, "positive clicks"),
                                     (fast.negative_map, "negative clicks")]):
        ax.imshow(m, cmap="viridis")
        ax.set_title(title)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(out / "interaction_maps.png", dpi=110)
    print("wrote", out / "interaction_maps.png")
except ImportError:
    pass
