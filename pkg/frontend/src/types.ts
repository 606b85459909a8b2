export type Phase =
  | "empty"
  | "uploaded"
  | "checking"
  | "no_face"
  | "ready"
  | "recognizing"
  | "result"
  | "error";

export interface DetectResponse {
  face_found: boolean;
  message?: string;
  verdict?: string;
  probabilities?: Record<string, number>;
  box?: { x: number; y: number; w: number; h: number };
  crop_thumbnail?: string; // base64 PNG
}

export interface ViewState {
  phase: Phase;
  /** data URL for the Sample frame, once a face was found */
  sampleThumbnail: string | null;
  /** verdict line shown in the Detection Result panel */
  resultText: string | null;
  probabilities: Record<string, number> | null;
  errorText: string | null;
  /** response stored at upload time; revealed by Start Recognition */
  pending: DetectResponse | null;
}
