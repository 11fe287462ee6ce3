/**
 * Pixel buffer helpers: grayscale to RGBA, the three-channel guidance
 * composite, pixel marking, and window cropping for the zoom insets.
 * Everything here is pure and DOM-free so it can be tested headless.
 */

export type Rgb = readonly [number, number, number];

export const MARKER_RED: Rgb = [255, 0, 0];
export const HIGHLIGHT_GREEN: Rgb = [0, 200, 0];

/** Expand an 8-bit grayscale buffer to opaque RGBA. */
export function grayToRgba(gray: Uint8Array): Uint8ClampedArray {
  const out = new Uint8ClampedArray(gray.length * 4);
  for (let i = 0; i < gray.length; i++) {
    const v = gray[i];
    const o = i * 4;
    out[o] = v;
    out[o + 1] = v;
    out[o + 2] = v;
    out[o + 3] = 255;
  }
  return out;
}

/**
 * Channel composite: red carries the first input's influence, green the
 * second's, blue the fused image. A pixel driven only by the first input
 * shows red, one driven by both shows yellow, one driven by neither but
 * bright in the fusion shows blue.
 */
export function compositeRgba(
  red: Uint8Array,
  green: Uint8Array,
  blue: Uint8Array,
): Uint8ClampedArray {
  if (red.length !== green.length || red.length !== blue.length) {
    throw new Error("composite channels must share one size");
  }
  const out = new Uint8ClampedArray(red.length * 4);
  for (let i = 0; i < red.length; i++) {
    const o = i * 4;
    out[o] = red[i];
    out[o + 1] = green[i];
    out[o + 2] = blue[i];
    out[o + 3] = 255;
  }
  return out;
}

/** Copy an RGBA buffer with the listed 1-based pixels blended toward a color. */
export function tintPixels(
  rgba: Uint8ClampedArray,
  indices: readonly number[],
  color: Rgb,
  strength: number = 0.5,
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(rgba);
  const keep = 1 - strength;
  for (const index of indices) {
    const o = (index - 1) * 4;
    if (o < 0 || o + 3 >= out.length) {
      continue;
    }
    out[o] = Math.round(out[o] * keep + color[0] * strength);
    out[o + 1] = Math.round(out[o + 1] * keep + color[1] * strength);
    out[o + 2] = Math.round(out[o + 2] * keep + color[2] * strength);
  }
  return out;
}

/** Copy an RGBA buffer with the listed 1-based pixels set to a color. */
export function paintPixels(
  rgba: Uint8ClampedArray,
  indices: readonly number[],
  color: Rgb,
): Uint8ClampedArray {
  return tintPixels(rgba, indices, color, 1.0);
}

export interface CroppedRgba {
  rgba: Uint8ClampedArray;
  width: number;
  height: number;
}

/** Cut a rectangular window (end rows/cols exclusive) out of an RGBA image. */
export function cropRgba(
  rgba: Uint8ClampedArray,
  width: number,
  rowStart: number,
  rowEnd: number,
  colStart: number,
  colEnd: number,
): CroppedRgba {
  const outW = colEnd - colStart;
  const outH = rowEnd - rowStart;
  const out = new Uint8ClampedArray(outW * outH * 4);
  for (let r = 0; r < outH; r++) {
    const src = ((rowStart + r) * width + colStart) * 4;
    out.set(rgba.subarray(src, src + outW * 4), r * outW * 4);
  }
  return { rgba: out, width: outW, height: outH };
}

/** Draw a one-pixel box around (row, col), clipped at the edges. In place. */
export function outlineBox(
  rgba: Uint8ClampedArray,
  width: number,
  height: number,
  row: number,
  col: number,
  color: Rgb,
): void {
  for (let dr = -1; dr <= 1; dr++) {
    for (let dc = -1; dc <= 1; dc++) {
      if (dr === 0 && dc === 0) {
        continue;
      }
      const r = row + dr;
      const c = col + dc;
      if (r < 0 || r >= height || c < 0 || c >= width) {
        continue;
      }
      const o = (r * width + c) * 4;
      rgba[o] = color[0];
      rgba[o + 1] = color[1];
      rgba[o + 2] = color[2];
      rgba[o + 3] = 255;
    }
  }
}
