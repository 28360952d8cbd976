"""Independent brute-force oracles shared by the test suite.

These deliberately avoid the library's code paths (scipy labeling/EDT, the
vectorized encoders) so that agreement is meaningful.
"""

import math
from collections import deque

import numpy as np


def bfs_components(mask):
    """4-connected components via explicit BFS; raster order of discovery."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    seen = np.zeros_like(mask)
    comps = []
    for r0 in range(h):
        for c0 in range(w):
            if not mask[r0, c0] or seen[r0, c0]:
                continue
            comp = np.zeros_like(mask)
            q = deque([(r0, c0)])
            seen[r0, c0] = True
            while q:
                r, c = q.popleft()
                comp[r, c] = True
                for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < h and 0 <= cc < w and mask[rr, cc] and not seen[rr, cc]:
                        seen[rr, cc] = True
                        q.append((rr, cc))
            comps.append(comp)
    return comps


def boundary_sq_distances(component):
    """Per-pixel min squared distance to any pixel outside the component.

    The image border counts as outside (a virtual ring at offset 1). Chunked
    pairwise scan, exact in integer arithmetic.
    """
    component = np.asarray(component, dtype=bool)
    h, w = component.shape
    inside = np.argwhere(component)
    outside = np.argwhere(~component)
    ring = []
    for c in range(-1, w + 1):
        ring.append((-1, c))
        ring.append((h, c))
    for r in range(0, h):
        ring.append((r, -1))
        ring.append((r, w))
    outside = np.vstack([outside, np.array(ring)]) if outside.size else np.array(ring)
    out = np.zeros((h, w), dtype=np.int64)
    for start in range(0, inside.shape[0], 512):
        block = inside[start:start + 512]
        d2 = ((block[:, None, :] - outside[None, :, :]) ** 2).sum(axis=2)
        out[block[:, 0], block[:, 1]] = d2.min(axis=1)
    return out


def oracle_next_click(gt, current, kinds):
    """Reference click placement: largest admissible component, max boundary
    distance, ties by raster order throughout. Returns (row, col, kind) or None."""
    gt = np.asarray(gt, dtype=bool)
    current = np.asarray(current, dtype=bool)
    candidates = []
    for kind, err in (("false_negative", gt & ~current), ("false_positive", current & ~gt)):
        if kind not in kinds:
            continue
        for comp in bfs_components(err):
            first = tuple(np.argwhere(comp)[0])
            candidates.append((-int(comp.sum()), first, kind, comp))
    if not candidates:
        return None
    candidates.sort(key=lambda t: (t[0], t[1]))
    _, _, kind, comp = candidates[0]
    d2 = boundary_sq_distances(comp)
    best = None
    for r in range(comp.shape[0]):
        for c in range(comp.shape[1]):
            if comp[r, c] and (best is None or d2[r, c] > best[2]):
                best = (r, c, d2[r, c])
    return best[0], best[1], kind, best[2], comp


def random_blob_mask(rng, h, w, threshold=0.5, smooth=2):
    """Random smooth-ish boolean mask for stress tests."""
    noise = rng.random((h, w))
    kernel = np.ones((smooth * 2 + 1, smooth * 2 + 1))
    padded = np.pad(noise, smooth, mode="edge")
    acc = np.zeros((h, w))
    for dr in range(kernel.shape[0]):
        for dc in range(kernel.shape[1]):
            acc += padded[dr:dr + h, dc:dc + w]
    acc /= kernel.size
    return acc > np.quantile(acc, threshold)
