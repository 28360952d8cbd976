/** Mask run-length payloads as served in the click-response JSON body.
 *
 * Row-major, alternating run lengths starting with a (possibly zero-length)
 * background run: {shape: [H, W], counts: [bg, fg, bg, ...]}.
 */

export interface RleMask {
  shape: [number, number];
  counts: number[];
}

/** Decode into a flat 0/1 byte array of length H*W (row-major). */
export function decodeRle(rle: RleMask): Uint8Array {
  const [h, w] = rle.shape;
  const size = h * w;
  const out = new Uint8Array(size);
  let pos = 0;
  let value = 0;
  for (const run of rle.counts) {
    if (run < 0 || pos + run > size) {
      throw new Error(`RLE run of ${run} overflows mask of ${size} pixels`);
    }
    if (value === 1) {
      out.fill(1, pos, pos + run);
    }
    pos += run;
    value = 1 - value;
  }
  if (pos !== size) {
    throw new Error(`RLE covers ${pos} of ${size} pixels`);
  }
  return out;
}

export function encodeRle(mask: Uint8Array, h: number, w: number): RleMask {
  if (mask.length !== h * w) {
    throw new Error(`mask length ${mask.length} does not match ${h}x${w}`);
  }
  const counts: number[] = [];
  let value = 0;
  let run = 0;
  for (let i = 0; i < mask.length; i++) {
    const v = mask[i] ? 1 : 0;
    if (v === value) {
      run += 1;
    } else {
      counts.push(run);
      value = v;
      run = 1;
    }
  }
  counts.push(run);
  return { shape: [h, w], counts };
}

export interface OverlayColor {
  r: number;
  g: number;
  b: number;
}

/** Render the mask into an RGBA buffer for a canvas ImageData overlay.
 *
 * Foreground pixels get the overlay color at `opacity` (0..1 -> alpha 0..255);
 * background pixels stay fully transparent, so the image underneath shows
 * through untouched.
 */
export function renderOverlay(
  mask: Uint8Array,
  h: number,
  w: number,
  color: OverlayColor = { r: 66, g: 133, b: 244 },
  opacity = 0.5,
): Uint8ClampedArray {
  if (mask.length !== h * w) {
    throw new Error(`mask length ${mask.length} does not match ${h}x${w}`);
  }
  const alpha = Math.round(Math.min(Math.max(opacity, 0), 1) * 255);
  const out = new Uint8ClampedArray(h * w * 4);
  for (let i = 0; i < mask.length; i++) {
    if (mask[i]) {
      const o = i * 4;
      out[o] = color.r;
      out[o + 1] = color.g;
      out[o + 2] = color.b;
      out[o + 3] = alpha;
    }
  }
  return out;
}
