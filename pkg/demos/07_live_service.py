"""The live annotation service, driven end to end in-process.

The same app serves real checkpoints via `clickseg serve --ckpt ...`; here it
wraps the torch-free stand-in segmenter so the demo needs no weights. The
browser client under frontend/ speaks exactly this API.
"""

import io

import numpy as np
from fastapi.testclient import TestClient
from PIL import Image

from clickseg.service import DistanceFieldPipeline, create_app, rle_decode

app = create_app(DistanceFieldPipeline(), max_dim=1024, queue_depth=4)
client = TestClient(app)

print("health:", client.get("/healthz").json())

# Upload an image (and a ground-truth mask, which enables live IoU reporting).
rng = np.random.default_rng(0)
image = rng.integers(0, 255, size=(80, 100, 3)).astype(np.uint8)
gt = np.zeros((80, 100), dtype=bool)
gt[20:60, 25:75] = True


def png(arr, mode=None):
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


resp = client.post("/sessions", files={
    "image": ("img.png", png(image), "image/png"),
    "gt": ("gt.png", png((gt * 255).astype(np.uint8), mode="L"), "image/png"),
})
session = resp.json()
print("session:", session)
sid = session["id"]

# Click loop: positive on the object, negative on the background.
for row, col, polarity in [(40, 50, "positive"), (5, 5, "negative"), (70, 90, "negative")]:
    body = client.post(f"/sessions/{sid}/clicks",
                       json={"row": row, "col": col, "polarity": polarity}).json()
    mask = rle_decode(body["mask_rle"])
    print(f"click ({row},{col},{polarity}): IoU {body['iou']:.3f}, "
          f"{body['latency_ms']:.1f} ms, mask pixels {int(mask.sum())}")

# Undo drops the last click and recomputes from the remaining log.
undo = client.post(f"/sessions/{sid}/undo").json()
print("after undo:", undo["click_count"], "clicks, IoU", round(undo["iou"], 3))

# The current mask is also served as a lossless PNG.
png_mask = client.get(f"/sessions/{sid}/mask").content
decoded = np.asarray(Image.open(io.BytesIO(png_mask))) > 0
print("PNG mask matches RLE mask:", bool(np.array_equal(decoded, rle_decode(undo["mask_rle"]))))

client.post(f"/sessions/{sid}/reset")
print("after reset:", client.get(f"/sessions/{sid}/mask").status_code,
      "mask empty:", not np.asarray(
          Image.open(io.BytesIO(client.get(f"/sessions/{sid}/mask").content))).any())
