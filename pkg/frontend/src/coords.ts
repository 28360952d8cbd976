/** Mapping between canvas display coordinates and image pixel coordinates.
 *
 * The canvas shows the image at a uniform display scale (canvas px per image
 * px). Clicks arrive as canvas (x, y); the server wants integer (row, col).
 */

export interface PixelCoord {
  row: number;
  col: number;
}

export interface DisplayPoint {
  x: number;
  y: number;
}

/** Canvas position -> integer pixel coordinate (inverse of display scaling,
 * rounded to the nearest pixel center). */
export function displayToImage(p: DisplayPoint, scale: number): PixelCoord {
  if (scale <= 0) {
    throw new Error(`display scale must be positive, got ${scale}`);
  }
  return {
    row: Math.round(p.y / scale - 0.5),
    col: Math.round(p.x / scale - 0.5),
  };
}

/** Pixel coordinate -> canvas position of that pixel's center. */
export function imageToDisplay(c: PixelCoord, scale: number): DisplayPoint {
  if (scale <= 0) {
    throw new Error(`display scale must be positive, got ${scale}`);
  }
  return {
    x: (c.col + 0.5) * scale,
    y: (c.row + 0.5) * scale,
  };
}

export function clampToImage(c: PixelCoord, height: number, width: number): PixelCoord {
  return {
    row: Math.min(Math.max(c.row, 0), height - 1),
    col: Math.min(Math.max(c.col, 0), width - 1),
  };
}
