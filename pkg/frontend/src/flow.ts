// The upload interaction as a pure async flow over the state machine, with
// fetch injected: local pre-validation must reject bad files before a single
// request leaves the client.

import { postDetect, type FetchLike } from "./api.js";
import { checkStarted, detectResponseArrived, failed, fileSelected } from "./state.js";
import type { ViewState } from "./types.js";
import { checkUpload } from "./validate.js";

export interface FileLike {
  name: string;
  size: number;
  type: string;
  blob: Blob;
}

export async function uploadImage(
  state: ViewState,
  file: FileLike,
  fetchFn: FetchLike,
): Promise<ViewState> {
  const verdict = checkUpload(file.name, file.size, file.type);
  if (!verdict.ok) {
    return failed(state, verdict.reason ?? "invalid file");
  }
  let next = checkStarted(fileSelected(state));
  try {
    const response = await postDetect(file.blob, file.name, fetchFn);
    return detectResponseArrived(next, response);
  } catch (err) {
    return failed(next, err instanceof Error ? err.message : String(err));
  }
}
