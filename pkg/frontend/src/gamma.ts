/**
 * Client-side gamma correction. Gradient panes keep the normalized 8-bit
 * buffer from their last frame and re-map it through a lookup table when a
 * slider moves, so dragging costs zero network traffic.
 */

export const GAMMA_MIN = 0.1;
export const GAMMA_MAX = 2.0;

/** Clamp a slider value into the supported gamma range. */
export function clampGamma(value: number): number {
  if (Number.isNaN(value)) {
    return 1.0;
  }
  return Math.min(GAMMA_MAX, Math.max(GAMMA_MIN, value));
}

/** 256-entry table mapping v to round(255 * (v/255)^gamma). */
export function gammaLut(gamma: number): Uint8Array {
  const g = clampGamma(gamma);
  const lut = new Uint8Array(256);
  for (let v = 0; v < 256; v++) {
    lut[v] = Math.round(255 * Math.pow(v / 255, g));
  }
  return lut;
}

/** Re-map a normalized grayscale buffer; pure, input is left untouched. */
export function applyGamma(norm: Uint8Array, gamma: number): Uint8Array {
  const lut = gammaLut(gamma);
  const out = new Uint8Array(norm.length);
  for (let i = 0; i < norm.length; i++) {
    out[i] = lut[norm[i]];
  }
  return out;
}
