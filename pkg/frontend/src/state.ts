/**
 * Session flow state machine, kept pure so the whole protocol is testable
 * without a DOM.
 *
 * Phases: setup -> instruction -> (playing <-> rating)* -> finished.
 * The rating phase is only reachable from a playback-completion event,
 * and the item index never decreases: both invariants are enforced here
 * rather than left to the rendering layer.
 */

export type Phase = "setup" | "instruction" | "playing" | "rating" | "finished";

export interface CurrentItem {
  index: number;
  videoId: string;
  mediaToken: string;
}

export interface UiSessionState {
  phase: Phase;
  sessionId: string | null;
  playlistLength: number;
  item: CurrentItem | null;
  /** within "playing": true shows the CONTINUE gate, false means media rolling */
  awaitingContinue: boolean;
  notice: string | null;
}

export const initialState: UiSessionState = {
  phase: "setup",
  sessionId: null,
  playlistLength: 0,
  item: null,
  awaitingContinue: true,
  notice: null,
};

export function sessionCreated(state: UiSessionState, sessionId: string, playlistLength: number): UiSessionState {
  return { ...initialState, phase: "instruction", sessionId, playlistLength };
}

/** START (from the instruction screen) or AGAIN-with-resume: arm the first item. */
export function itemReceived(state: UiSessionState, item: CurrentItem, total: number): UiSessionState {
  if (state.item !== null && item.index < state.item.index) {
    throw new Error(`item index went backwards: ${state.item.index} -> ${item.index}`);
  }
  return {
    ...state,
    phase: "playing",
    playlistLength: total,
    item,
    awaitingContinue: true,
    notice: null,
  };
}

export function playbackStarted(state: UiSessionState): UiSessionState {
  if (state.phase !== "playing") throw new Error(`cannot start playback from ${state.phase}`);
  return { ...state, awaitingContinue: false, notice: null };
}

export function playbackEnded(state: UiSessionState): UiSessionState {
  if (state.phase !== "playing" || state.awaitingContinue) {
    throw new Error("rating is only reachable after playback completes");
  }
  return { ...state, phase: "rating" };
}

export function mediaFailed(state: UiSessionState, message: string): UiSessionState {
  // back to the gate; the same item replays from the start, nothing rated
  return { ...state, phase: "playing", awaitingContinue: true, notice: message };
}

export function ratingRejected(state: UiSessionState, message: string): UiSessionState {
  if (state.phase !== "rating") throw new Error(`no rating pending in ${state.phase}`);
  return { ...state, notice: message };
}

export function sessionFinished(state: UiSessionState): UiSessionState {
  return { ...state, phase: "finished", item: null, notice: null };
}

export function backToSetup(): UiSessionState {
  return initialState;
}
