// Client-side pre-validation mirroring the server's upload contract, so
// obviously bad files are rejected before any bytes leave the browser.

export const MAX_UPLOAD_BYTES = 4 * 1024 * 1024;

const ALLOWED_EXTENSIONS = new Set(["jpg", "jpeg", "png", "gif", "bmp"]);
const ALLOWED_MIME = new Set(["image/jpeg", "image/png", "image/gif", "image/bmp"]);

export interface UploadCheck {
  ok: boolean;
  reason?: string;
}

export function checkUpload(name: string, size: number, mimeType: string): UploadCheck {
  const extension = name.includes(".") ? name.split(".").pop()!.toLowerCase() : "";
  const extensionOk = ALLOWED_EXTENSIONS.has(extension);
  const mimeOk = ALLOWED_MIME.has(mimeType.toLowerCase());
  if (!extensionOk && !mimeOk) {
    return { ok: false, reason: `unsupported format: expected JPEG, PNG, GIF or BMP` };
  }
  if (size > MAX_UPLOAD_BYTES) {
    const mib = (size / (1024 * 1024)).toFixed(1);
    return { ok: false, reason: `file is ${mib} MiB; the limit is 4 MiB` };
  }
  return { ok: true };
}
