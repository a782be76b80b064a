// Schemas for the session runner's control channel.
//
// Events arrive as {"ev": <contiguous seq>, "type": <string>, "data": {...}};
// commands go out as {"cmd": <string>, ...}. The server replays buffered
// events after a {"cmd":"subscribe","from_seq":N}.

export type Role = "user" | "assistant";

export type ToolState = "pending-approval" | "dispatched" | "ok" | "error" | "timeout";

export interface ControlEvent {
  ev: number;
  type: string;
  data: Record<string, unknown>;
}

export interface TranscriptEntry {
  role: Role;
  text: string;
  final: boolean;
}

export interface ToolCallView {
  callId: string;
  name: string;
  task: string;
  state: ToolState;
  skill?: string;
  detail?: string;
  latencyMs?: number;
  steps?: number;
}

export interface MediaIndicators {
  mode: string;
  framesSent: number;
  chunksSent: number;
  bargeInsDropped: number;
}

export type Command =
  | { cmd: "subscribe"; from_seq: number }
  | { cmd: "utterance"; text: string }
  | { cmd: "frame"; jpeg_b64: string; width?: number; height?: number }
  | { cmd: "mode"; value: "audio-and-video" | "audio-only" }
  | { cmd: "approval"; call_id: string; verdict: "approve" | "deny" };

export function isControlEvent(value: unknown): value is ControlEvent {
  if (typeof value !== "object" || value === null) return false;
  const obj = value as Record<string, unknown>;
  return typeof obj.ev === "number" && typeof obj.type === "string" &&
    typeof obj.data === "object" && obj.data !== null;
}
