/**
 * Wire types for the fusion saliency service, plus strict parsing of the
 * hover stream. Anything that fails validation is reported as malformed
 * rather than thrown, so the UI can show a banner and keep its last frame.
 */

/** Raw 8-bit grayscale buffer as sent by the service. */
export interface EncodedGray {
  b64: string;
  width: number;
  height: number;
}

/** One side of a jointly normalized gradient pair. */
export interface GradientImage {
  /** Normalized magnitudes, 8-bit; gamma is applied client side to this. */
  b64_norm: string;
  /** Server-side gamma-corrected variant (used for exports, not hover). */
  b64_display: string;
  width: number;
  height: number;
  /** Shared magnitude range across both sides of the pair. */
  min: number;
  max: number;
}

export interface SessionInfo {
  session: string;
  model: string;
  pair: string;
  width: number;
  height: number;
  n: number;
  rf_radius: number;
  images: { x1: EncodedGray; x2: EncodedGray; fused: EncodedGray };
}

/** One answered hover query; seq values are strictly increasing. */
export interface HoverFrame {
  seq: number;
  pixel: number;
  gamma_corr1: number;
  images: { x1: GradientImage; x2: GradientImage };
  raw: { x1: number; x2: number };
  highlight: number[];
}

export interface GuidanceResult {
  status: string;
  gamma_corr2?: number;
  images?: { x1: GradientImage; x2: GradientImage };
  fused?: EncodedGray;
}

export interface JobStatus {
  job: string;
  session: string;
  status: "pending" | "running" | "done" | "cancelled" | "failed";
  progress: { done: number; total: number };
  error?: string;
}

export interface BenchResult {
  hovers: number;
  mean_seconds: number;
  median_seconds: number;
  max_seconds: number;
  fps: number;
}

export type HoverResult =
  | { kind: "frame"; frame: HoverFrame }
  | { kind: "error"; message: string; pixel?: number }
  | { kind: "malformed"; message: string };

/** Decode standard base64 into bytes; works in browsers and Node. */
export function decodeBase64(b64: string): Uint8Array {
  if (typeof atob === "function") {
    const bin = atob(b64);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) {
      out[i] = bin.charCodeAt(i);
    }
    return out;
  }
  return new Uint8Array(Buffer.from(b64, "base64"));
}

function isInt(v: unknown): v is number {
  return typeof v === "number" && Number.isInteger(v);
}

function checkGradientImage(img: unknown, label: string): string | null {
  if (typeof img !== "object" || img === null) {
    return `${label} is not an object`;
  }
  const g = img as Record<string, unknown>;
  if (typeof g.b64_norm !== "string" || typeof g.b64_display !== "string") {
    return `${label} is missing pixel buffers`;
  }
  if (!isInt(g.width) || !isInt(g.height) || g.width < 1 || g.height < 1) {
    return `${label} has bad extents`;
  }
  if (typeof g.min !== "number" || typeof g.max !== "number") {
    return `${label} is missing its magnitude range`;
  }
  const want = (g.width as number) * (g.height as number);
  if (decodeBase64(g.b64_norm).length !== want) {
    return `${label} buffer length does not match extents`;
  }
  return null;
}

/**
 * Parse one WebSocket message from the hover stream. Returns a typed
 * frame, a service-reported error, or a malformed verdict; never throws.
 */
export function parseHoverMessage(text: string): HoverResult {
  let obj: unknown;
  try {
    obj = JSON.parse(text);
  } catch {
    return { kind: "malformed", message: "hover payload is not valid JSON" };
  }
  if (typeof obj !== "object" || obj === null || Array.isArray(obj)) {
    return { kind: "malformed", message: "hover payload is not an object" };
  }
  const msg = obj as Record<string, unknown>;
  if (typeof msg.error === "string") {
    return {
      kind: "error",
      message: msg.error,
      pixel: isInt(msg.pixel) ? (msg.pixel as number) : undefined,
    };
  }
  if (!isInt(msg.seq) || (msg.seq as number) < 1) {
    return { kind: "malformed", message: "hover frame is missing a sequence number" };
  }
  if (!isInt(msg.pixel) || (msg.pixel as number) < 1) {
    return { kind: "malformed", message: "hover frame is missing its pixel index" };
  }
  if (typeof msg.gamma_corr1 !== "number") {
    return { kind: "malformed", message: "hover frame is missing gamma_corr1" };
  }
  const images = msg.images as Record<string, unknown> | undefined;
  if (typeof images !== "object" || images === null) {
    return { kind: "malformed", message: "hover frame is missing images" };
  }
  for (const side of ["x1", "x2"] as const) {
    const bad = checkGradientImage(images[side], `images.${side}`);
    if (bad !== null) {
      return { kind: "malformed", message: bad };
    }
  }
  const raw = msg.raw as Record<string, unknown> | undefined;
  if (
    typeof raw !== "object" ||
    raw === null ||
    typeof raw.x1 !== "number" ||
    typeof raw.x2 !== "number"
  ) {
    return { kind: "malformed", message: "hover frame is missing raw gradients" };
  }
  if (!Array.isArray(msg.highlight) || !msg.highlight.every(isInt)) {
    return { kind: "malformed", message: "hover frame has a bad highlight list" };
  }
  return { kind: "frame", frame: msg as unknown as HoverFrame };
}
