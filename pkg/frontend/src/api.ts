// The only three endpoints this UI ever calls.

import type { DetectResponse } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export async function postDetect(
  file: Blob,
  filename: string,
  fetchFn: FetchLike = fetch,
): Promise<DetectResponse> {
  const form = new FormData();
  form.append("image", file, filename);
  const response = await fetchFn("/api/detect", { method: "POST", body: form });
  const body = await response.json().catch(() => null);
  if (!response.ok) {
    const message = body && body.message ? body.message : `server returned ${response.status}`;
    throw new Error(message);
  }
  return body as DetectResponse;
}

export async function getHealth(fetchFn: FetchLike = fetch): Promise<boolean> {
  try {
    const response = await fetchFn("/api/health");
    const body = await response.json();
    return Boolean(body && body.model_loaded);
  } catch {
    return false;
  }
}

export async function getModelInfo(
  fetchFn: FetchLike = fetch,
): Promise<Record<string, unknown> | null> {
  try {
    const response = await fetchFn("/api/model");
    if (!response.ok) return null;
    return await response.json();
  } catch {
    return null;
  }
}
