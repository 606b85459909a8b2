// Pure view-state machine. Transitions follow
//   empty -> uploaded -> checking -> {no_face | ready} -> recognizing -> {result | error}
// and the result phase is unreachable without a stored face-check response.

import type { DetectResponse, ViewState } from "./types.js";

export const NO_FACE_MESSAGE = "No face found in the uploaded image.";
export const WAITING_TEXT = "Waiting for recognition";

export function initialState(): ViewState {
  return {
    phase: "empty",
    sampleThumbnail: null,
    resultText: null,
    probabilities: null,
    errorText: null,
    pending: null,
  };
}

export function fileSelected(state: ViewState): ViewState {
  return { ...initialState(), phase: "uploaded" };
}

export function checkStarted(state: ViewState): ViewState {
  if (state.phase !== "uploaded") return state;
  return { ...state, phase: "checking" };
}

export function detectResponseArrived(state: ViewState, response: DetectResponse): ViewState {
  if (state.phase !== "checking") return state;
  if (!response.face_found) {
    return {
      ...initialState(),
      phase: "no_face",
      errorText: response.message ?? NO_FACE_MESSAGE,
    };
  }
  return {
    ...initialState(),
    phase: "ready",
    sampleThumbnail: response.crop_thumbnail
      ? `data:image/png;base64,${response.crop_thumbnail}`
      : null,
    pending: response,
  };
}

export function failed(state: ViewState, message: string): ViewState {
  return { ...initialState(), phase: "error", errorText: message };
}

/** Reveal the stored verdict and distribution; ignored outside the ready phase. */
export function startRecognition(state: ViewState): ViewState {
  if (state.phase !== "ready" || !state.pending) return state;
  const probs = state.pending.probabilities ?? {};
  const verdict = state.pending.verdict ?? argmaxLabel(probs);
  return {
    ...state,
    phase: "result",
    resultText: verdict,
    probabilities: probs,
  };
}

export function reset(_state: ViewState): ViewState {
  return initialState();
}

export function argmaxLabel(probabilities: Record<string, number>): string {
  let best = "";
  let bestValue = -Infinity;
  for (const [label, value] of Object.entries(probabilities)) {
    if (value > bestValue) {
      best = label;
      bestValue = value;
    }
  }
  return best;
}
