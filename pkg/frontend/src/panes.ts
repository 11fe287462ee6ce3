/**
 * Frame rendering against an abstract pane surface. The renderer decodes
 * buffers once per frame and caches the normalized bytes, so a gamma
 * slider drag repaints purely from cache with no network traffic.
 */

import type { HoverResult, SessionInfo } from "./protocol.js";
import { decodeBase64 } from "./protocol.js";
import type { ViewState } from "./state.js";
import { applyGamma } from "./gamma.js";
import { insetWindow, toRowCol } from "./geometry.js";
import {
  HIGHLIGHT_GREEN,
  MARKER_RED,
  compositeRgba,
  cropRgba,
  grayToRgba,
  outlineBox,
  paintPixels,
  tintPixels,
} from "./composite.js";

export type PaneName =
  | "x1"
  | "x2"
  | "fused"
  | "jacobian_x1"
  | "jacobian_x2"
  | "inset_x1"
  | "inset_x2"
  | "guidance_x1"
  | "guidance_x2"
  | "guidance_rgb";

/** Panes that accept pixel selection; Jacobian panes are display-only. */
export const SELECTABLE_PANES: ReadonlySet<PaneName> = new Set([
  "x1",
  "x2",
  "fused",
  "guidance_x1",
  "guidance_x2",
  "guidance_rgb",
]);

export function canSelectOn(pane: PaneName): boolean {
  return SELECTABLE_PANES.has(pane);
}

export interface PaneImage {
  rgba: Uint8ClampedArray;
  width: number;
  height: number;
}

/** Where painted panes and status text land (canvas, test buffer, ...). */
export interface PaneSurface {
  putImage(pane: PaneName, image: PaneImage): void;
  setBanner(message: string | null): void;
  setReadout(text: string): void;
}

interface GrayCache {
  bytes: Uint8Array;
  width: number;
  height: number;
}

export class Renderer {
  private surface: PaneSurface;
  private statics: { x1?: GrayCache; x2?: GrayCache; fused?: GrayCache } = {};
  private jacobian: { x1?: GrayCache; x2?: GrayCache } = {};
  private guidanceCache: { x1?: GrayCache; x2?: GrayCache } = {};
  private highlight: number[] = [];
  private pixel: number | null = null;

  constructor(surface: PaneSurface) {
    this.surface = surface;
  }

  /** Paint the static input and fused panes for a fresh session. */
  paintSession(info: SessionInfo): void {
    for (const pane of ["x1", "x2", "fused"] as const) {
      const enc = info.images[pane];
      this.statics[pane] = {
        bytes: decodeBase64(enc.b64),
        width: enc.width,
        height: enc.height,
      };
    }
    this.jacobian = {};
    this.guidanceCache = {};
    this.highlight = [];
    this.pixel = null;
    this.paintStatics();
    this.surface.setBanner(null);
  }

  private paintStatics(): void {
    for (const pane of ["x1", "x2", "fused"] as const) {
      const cache = this.statics[pane];
      if (cache === undefined) {
        continue;
      }
      let rgba = grayToRgba(cache.bytes);
      if (this.highlight.length > 0) {
        rgba = tintPixels(rgba, this.highlight, HIGHLIGHT_GREEN, 0.35);
      }
      this.surface.putImage(pane, { rgba, width: cache.width, height: cache.height });
    }
  }

  /**
   * Fold one hover message into the display. A frame repaints the
   * Jacobian panes and insets; an error or malformed payload only sets
   * the banner, leaving the previous panes untouched.
   */
  paintHover(state: ViewState, result: HoverResult): void {
    if (result.kind !== "frame") {
      this.surface.setBanner(result.message);
      return;
    }
    if (state.frame !== result.frame) {
      // stale frame: the state kept a newer one, do not repaint backwards
      return;
    }
    const frame = result.frame;
    this.jacobian = {
      x1: {
        bytes: decodeBase64(frame.images.x1.b64_norm),
        width: frame.images.x1.width,
        height: frame.images.x1.height,
      },
      x2: {
        bytes: decodeBase64(frame.images.x2.b64_norm),
        width: frame.images.x2.width,
        height: frame.images.x2.height,
      },
    };
    this.highlight = frame.highlight;
    this.pixel = frame.pixel;
    this.surface.setBanner(null);
    this.surface.setReadout(
      `pixel ${frame.pixel}: dF/dx1 = ${frame.raw.x1.toExponential(3)}, ` +
        `dF/dx2 = ${frame.raw.x2.toExponential(3)}`,
    );
    this.paintStatics();
    this.paintJacobians(state.gamma1);
  }

  private paintJacobians(gamma1: number): void {
    const pixel = this.pixel;
    for (const side of ["x1", "x2"] as const) {
      const cache = this.jacobian[side];
      if (cache === undefined || pixel === null) {
        continue;
      }
      const mapped = applyGamma(cache.bytes, gamma1);
      let rgba = grayToRgba(mapped);
      rgba = paintPixels(rgba, [pixel], MARKER_RED);
      this.surface.putImage(`jacobian_${side}`, {
        rgba,
        width: cache.width,
        height: cache.height,
      });

      const win = insetWindow(pixel, cache.width, cache.height);
      const inset = cropRgba(rgba, cache.width, win.rowStart, win.rowEnd, win.colStart, win.colEnd);
      outlineBox(inset.rgba, inset.width, inset.height, win.centerRow, win.centerCol, MARKER_RED);
      this.surface.putImage(`inset_${side}`, inset);
    }
  }

  /** Paint guidance panes and the channel composite from cached buffers. */
  paintGuidance(state: ViewState): void {
    const result = state.guidance;
    if (result === null || result.images === undefined) {
      return;
    }
    for (const side of ["x1", "x2"] as const) {
      const img = result.images[side];
      this.guidanceCache[side] = {
        bytes: decodeBase64(img.b64_norm),
        width: img.width,
        height: img.height,
      };
    }
    this.paintGuidancePanes(state.gamma2);
  }

  private paintGuidancePanes(gamma2: number): void {
    const g1 = this.guidanceCache.x1;
    const g2 = this.guidanceCache.x2;
    const fused = this.statics.fused;
    if (g1 === undefined || g2 === undefined) {
      return;
    }
    const red = applyGamma(g1.bytes, gamma2);
    const green = applyGamma(g2.bytes, gamma2);
    this.surface.putImage("guidance_x1", {
      rgba: grayToRgba(red),
      width: g1.width,
      height: g1.height,
    });
    this.surface.putImage("guidance_x2", {
      rgba: grayToRgba(green),
      width: g2.width,
      height: g2.height,
    });
    if (fused !== undefined && fused.bytes.length === red.length) {
      this.surface.putImage("guidance_rgb", {
        rgba: compositeRgba(red, green, fused.bytes),
        width: g1.width,
        height: g1.height,
      });
    }
  }

  /** Repaint gradient panes after a slider move; cache only, no network. */
  regamma(state: ViewState): void {
    this.paintJacobians(state.gamma1);
    this.paintGuidancePanes(state.gamma2);
  }

  /** Inset center in image coordinates, for cursor feedback. */
  principlePixelRowCol(width: number): { row: number; col: number } | null {
    return this.pixel === null ? null : toRowCol(this.pixel, width);
  }
}
