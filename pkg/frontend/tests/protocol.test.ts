import { describe, expect, it } from "vitest";

import { decodeBase64, parseHoverMessage } from "../src/protocol.js";
import { makeFrame, seededRng, toB64 } from "./helpers.js";

describe("decodeBase64", () => {
  it("round-trips random byte buffers", () => {
    const rng = seededRng(41);
    for (let trial = 0; trial < 50; trial++) {
      const bytes = new Uint8Array(1 + Math.floor(rng() * 300));
      for (let i = 0; i < bytes.length; i++) {
        bytes[i] = Math.floor(rng() * 256);
      }
      expect(Array.from(decodeBase64(toB64(bytes)))).toEqual(Array.from(bytes));
    }
  });
});

describe("parseHoverMessage", () => {
  it("accepts a well-formed frame", () => {
    const frame = makeFrame(3, 7, 4, 4);
    const result = parseHoverMessage(JSON.stringify(frame));
    expect(result.kind).toBe("frame");
    if (result.kind === "frame") {
      expect(result.frame.seq).toBe(3);
      expect(result.frame.pixel).toBe(7);
      expect(result.frame.raw).toEqual({ x1: 0.25, x2: 0.75 });
    }
  });

  it("passes service errors through with their pixel", () => {
    const result = parseHoverMessage(JSON.stringify({ error: "pixel index 0 out of range", pixel: 0 }));
    expect(result).toEqual({ kind: "error", message: "pixel index 0 out of range", pixel: 0 });
  });

  it("flags non-JSON and non-object payloads as malformed", () => {
    expect(parseHoverMessage("not json{").kind).toBe("malformed");
    expect(parseHoverMessage("[1,2]").kind).toBe("malformed");
    expect(parseHoverMessage("42").kind).toBe("malformed");
  });

  it("flags missing or broken fields as malformed", () => {
    const base = makeFrame(1, 1, 2, 2);
    const cases: Array<Record<string, unknown>> = [
      { ...base, seq: undefined },
      { ...base, seq: 0 },
      { ...base, seq: 1.5 },
      { ...base, pixel: "3" },
      { ...base, gamma_corr1: undefined },
      { ...base, images: undefined },
      { ...base, images: { x1: base.images.x1 } },
      { ...base, raw: { x1: 0.1 } },
      { ...base, highlight: [1, "2"] },
    ];
    for (const bad of cases) {
      expect(parseHoverMessage(JSON.stringify(bad)).kind).toBe("malformed");
    }
  });

  it("flags a buffer whose length disagrees with its extents", () => {
    const frame = makeFrame(1, 1, 4, 4);
    frame.images.x1.b64_norm = toB64(new Uint8Array(7));
    expect(parseHoverMessage(JSON.stringify(frame)).kind).toBe("malformed");
  });
});
