// Maps view state to what each widget shows, kept separate from the DOM so
// the placeholder and disabled-state contracts are directly testable.

import { NO_FACE_MESSAGE, WAITING_TEXT } from "./state.js";
import type { ViewState } from "./types.js";

export interface Presentation {
  uploadDisabled: boolean;
  startDisabled: boolean;
  resetDisabled: boolean;
  sampleImage: string | null;
  sampleText: string;
  resultText: string;
  showBars: boolean;
  barsText: string;
  statusText: string;
}

export function present(state: ViewState): Presentation {
  const busy = state.phase === "checking" || state.phase === "recognizing";
  const showResult = state.phase === "result" && state.resultText !== null;

  let statusText = "";
  if (state.phase === "no_face") {
    statusText = state.errorText ?? NO_FACE_MESSAGE;
  } else if (state.phase === "error") {
    statusText = state.errorText ?? "something went wrong";
  } else if (state.phase === "ready") {
    statusText = "Face found — press Start Recognition.";
  }

  const showBars = state.phase === "result" && state.probabilities !== null;
  return {
    uploadDisabled: busy,
    startDisabled: state.phase !== "ready",
    resetDisabled: state.phase === "empty",
    sampleImage: state.sampleThumbnail,
    sampleText: state.phase === "checking" ? "Checking for a face…" : "No sample yet",
    resultText: showResult ? state.resultText! : WAITING_TEXT,
    showBars,
    barsText: showBars ? "" : WAITING_TEXT,
    statusText,
  };
}
