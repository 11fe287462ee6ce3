/**
 * View state and its pure update functions. Two invariants live here:
 * the rendered frame always reflects the highest sequence number received
 * so far (stale frames are dropped), and bad payloads raise a banner
 * without disturbing the last good frame.
 */

import type { GuidanceResult, HoverFrame, HoverResult, SessionInfo } from "./protocol.js";
import { clampGamma } from "./gamma.js";
import { centerIndex } from "./geometry.js";

export interface ViewState {
  session: SessionInfo | null;
  /** Gamma for Jacobian panes (applied client side on cached buffers). */
  gamma1: number;
  /** Gamma for guidance panes and the guidance composite. */
  gamma2: number;
  /** Highest hover sequence number seen on this session. */
  seq: number;
  frame: HoverFrame | null;
  guidance: GuidanceResult | null;
  banner: string | null;
  /** Pixel whose frame we asked for most recently. */
  requestedPixel: number | null;
}

export function initialState(): ViewState {
  return {
    session: null,
    gamma1: 1.0,
    gamma2: 1.0,
    seq: 0,
    frame: null,
    guidance: null,
    banner: null,
    requestedPixel: null,
  };
}

/** Swap in a new session; hover history does not carry across sessions. */
export function withSession(state: ViewState, info: SessionInfo): ViewState {
  return {
    ...state,
    session: info,
    seq: 0,
    frame: null,
    guidance: null,
    banner: null,
    requestedPixel: centerIndex(info.width, info.height),
  };
}

export function withRequestedPixel(state: ViewState, pixel: number): ViewState {
  return { ...state, requestedPixel: pixel };
}

/**
 * Fold one hover message into the state. Frames with a sequence number
 * at or below the current one are dropped; errors and malformed payloads
 * set the banner and leave the last frame in place.
 */
export function applyHoverResult(state: ViewState, result: HoverResult): ViewState {
  if (result.kind === "frame") {
    if (result.frame.seq <= state.seq) {
      return state;
    }
    return { ...state, frame: result.frame, seq: result.frame.seq, banner: null };
  }
  return { ...state, banner: result.message };
}

export function setGamma1(state: ViewState, value: number): ViewState {
  return { ...state, gamma1: clampGamma(value) };
}

export function setGamma2(state: ViewState, value: number): ViewState {
  return { ...state, gamma2: clampGamma(value) };
}

export function withGuidance(state: ViewState, result: GuidanceResult): ViewState {
  return { ...state, guidance: result.status === "done" ? result : null };
}

export function clearBanner(state: ViewState): ViewState {
  return state.banner === null ? state : { ...state, banner: null };
}
