/** Viewer state machine. All transitions are pure: state in, state out. */

import type { SlideDocument } from "./types.js";
import { regionById } from "./types.js";

export type Playback =
  | { kind: "idle" }
  | { kind: "speaking"; target: "region"; regionId: number }
  | { kind: "speaking"; target: "all"; index: number };

export interface ViewerState {
  doc: SlideDocument | null;
  /** Region currently emphasized in the overlay, if any. */
  highlight: number | null;
  playback: Playback;
  /** Message shown when the last capture failed; null when clear. */
  banner: string | null;
  /** Caption text mirrored from speech, for caption-only playback. */
  caption: string | null;
  baseUrl: string;
}

export function initialState(baseUrl: string): ViewerState {
  return {
    doc: null,
    highlight: null,
    playback: { kind: "idle" },
    banner: null,
    caption: null,
    baseUrl,
  };
}

function checkInvariants(state: ViewerState): ViewerState {
  if (state.highlight !== null) {
    if (state.doc === null) {
      throw new Error("highlight without a document");
    }
    regionById(state.doc, state.highlight);
  }
  if (state.playback.kind === "speaking") {
    if (state.doc === null) {
      throw new Error("playback without a document");
    }
    if (state.playback.target === "region") {
      regionById(state.doc, state.playback.regionId);
    } else {
      const order = state.doc.reading_order;
      if (state.playback.index < 0 || state.playback.index >= order.length) {
        throw new Error(`playback index ${state.playback.index} out of range`);
      }
    }
  }
  return state;
}

/** A successful capture replaces the document and clears stale playback. */
export function withDocument(
  state: ViewerState,
  doc: SlideDocument,
): ViewerState {
  return checkInvariants({
    ...state,
    doc,
    highlight: null,
    playback: { kind: "idle" },
    banner: null,
    caption: null,
  });
}

/** A failed capture raises the banner; the previous document survives. */
export function withCaptureFailure(
  state: ViewerState,
  message: string,
): ViewerState {
  return checkInvariants({ ...state, banner: message });
}

export function startRegionSpeech(
  state: ViewerState,
  regionId: number,
): ViewerState {
  if (state.doc === null) {
    throw new Error("no document loaded");
  }
  regionById(state.doc, regionId);
  return checkInvariants({
    ...state,
    highlight: regionId,
    playback: { kind: "speaking", target: "region", regionId },
  });
}

export function startReadAll(state: ViewerState): ViewerState {
  if (state.doc === null || state.doc.reading_order.length === 0) {
    throw new Error("nothing to read");
  }
  const first = state.doc.reading_order[0];
  return checkInvariants({
    ...state,
    highlight: first,
    playback: { kind: "speaking", target: "all", index: 0 },
  });
}

/** Move READ ALL to the next region; returns idle past the last one. */
export function advance(state: ViewerState): ViewerState {
  if (state.playback.kind !== "speaking" || state.playback.target !== "all") {
    throw new Error("not reading the whole slide");
  }
  if (state.doc === null) {
    throw new Error("playback without a document");
  }
  const next = state.playback.index + 1;
  if (next >= state.doc.reading_order.length) {
    return stopped(state);
  }
  return checkInvariants({
    ...state,
    highlight: state.doc.reading_order[next],
    playback: { kind: "speaking", target: "all", index: next },
  });
}

export function stopped(state: ViewerState): ViewerState {
  return checkInvariants({
    ...state,
    highlight: null,
    playback: { kind: "idle" },
    caption: null,
  });
}

export function withCaption(
  state: ViewerState,
  caption: string | null,
): ViewerState {
  return checkInvariants({ ...state, caption });
}

/** Whether playback controls should be live at all. */
export function canPlay(state: ViewerState): boolean {
  return state.doc !== null && state.doc.reading_order.length > 0;
}
