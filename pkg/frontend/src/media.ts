// Frame attachment: validate and encode an image before it rides the
// control channel. Oversized uploads are rejected client-side.

import { Command } from "./types.js";

export const MAX_FRAME_BYTES = 2 * 1024 * 1024;

export type FrameResult =
  | { ok: true; command: Command }
  | { ok: false; reason: string };

export function prepareFrameCommand(bytes: Uint8Array, width = 0, height = 0): FrameResult {
  if (bytes.length === 0) {
    return { ok: false, reason: "empty image" };
  }
  if (bytes.length > MAX_FRAME_BYTES) {
    return { ok: false, reason: `image is ${bytes.length} bytes; limit is ${MAX_FRAME_BYTES}` };
  }
  if (!(bytes[0] === 0xff && bytes[1] === 0xd8
        && bytes[bytes.length - 2] === 0xff && bytes[bytes.length - 1] === 0xd9)) {
    return { ok: false, reason: "only JPEG frames are supported" };
  }
  return {
    ok: true,
    command: { cmd: "frame", jpeg_b64: toBase64(bytes), width, height },
  };
}

export function toBase64(bytes: Uint8Array): string {
  // Node (vitest) exposes Buffer; browsers go through btoa.
  const nodeBuffer = (globalThis as Record<string, any>).Buffer;
  if (nodeBuffer !== undefined) {
    return nodeBuffer.from(bytes).toString("base64");
  }
  let binary = "";
  for (const b of bytes) binary += String.fromCharCode(b);
  return btoa(binary);
}
