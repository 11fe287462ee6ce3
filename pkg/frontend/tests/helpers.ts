import type { GradientImage, HoverFrame } from "../src/protocol.js";

/** Small deterministic RNG (mulberry32) for seeded property loops. */
export function seededRng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function randInt(rng: () => number, lo: number, hi: number): number {
  return lo + Math.floor(rng() * (hi - lo + 1));
}

export function toB64(bytes: Uint8Array): string {
  return Buffer.from(bytes).toString("base64");
}

export function gradientImage(bytes: Uint8Array, width: number, height: number): GradientImage {
  return {
    b64_norm: toB64(bytes),
    b64_display: toB64(bytes),
    width,
    height,
    min: 0,
    max: 1,
  };
}

/** A structurally valid hover frame over constant gradient buffers. */
export function makeFrame(
  seq: number,
  pixel: number,
  width: number,
  height: number,
  fill1 = 0,
  fill2 = 0,
): HoverFrame {
  const n = width * height;
  return {
    seq,
    pixel,
    gamma_corr1: 1.0,
    images: {
      x1: gradientImage(new Uint8Array(n).fill(fill1), width, height),
      x2: gradientImage(new Uint8Array(n).fill(fill2), width, height),
    },
    raw: { x1: 0.25, x2: 0.75 },
    highlight: [pixel],
  };
}
