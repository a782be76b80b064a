// Console-side mirror of the session: transcript, tool-call timeline, media
// indicators and the pending-approvals queue, folded from control events.
//
// Tool-call states only ever move forward (pending-approval -> dispatched ->
// terminal); a stale or out-of-order event can never un-finish a call.

import {
  ControlEvent, MediaIndicators, ToolCallView, ToolState, TranscriptEntry,
} from "./types.js";

const STATE_RANK: Record<ToolState, number> = {
  "pending-approval": 0,
  dispatched: 1,
  ok: 2,
  error: 2,
  timeout: 2,
};

export function isToolState(value: unknown): value is ToolState {
  return typeof value === "string" && value in STATE_RANK;
}

export class ConsoleState {
  transcript: TranscriptEntry[] = [];
  timeline: ToolCallView[] = [];
  media: MediaIndicators = {
    mode: "audio-and-video", framesSent: 0, chunksSent: 0, bargeInsDropped: 0,
  };
  phase = "connecting";
  turns = 0;
  sessionId = "";
  surfaced: { code: string; message: string }[] = [];
  lastSeq = 0;
  droppedStale = 0;

  private openEntry: Partial<Record<string, number>> = {};
  private byCall = new Map<string, ToolCallView>();

  get pendingApprovals(): ToolCallView[] {
    return this.timeline.filter((t) => t.state === "pending-approval");
  }

  apply(event: ControlEvent): boolean {
    if (event.ev <= this.lastSeq) {
      this.droppedStale += 1; // replay overlap after a resubscribe
      return false;
    }
    this.lastSeq = event.ev;
    const data = event.data;
    switch (event.type) {
      case "hello":
        this.sessionId = String(data.session_id ?? "");
        break;
      case "phase":
        this.phase = String(data.phase ?? this.phase);
        if (typeof data.turns === "number") this.turns = data.turns;
        break;
      case "transcript":
        this.applyTranscript(String(data.role), String(data.text),
          Boolean(data.final));
        break;
      case "tool_state":
        this.applyToolState(data);
        break;
      case "media":
        if (typeof data.mode === "string") this.media.mode = data.mode;
        if (typeof data.frames_sent === "number") this.media.framesSent = data.frames_sent;
        if (typeof data.chunks_sent === "number") this.media.chunksSent = data.chunks_sent;
        if (typeof data.barge_in_dropped === "number") {
          this.media.bargeInsDropped += data.barge_in_dropped;
        }
        break;
      case "surface":
        this.surfaced.push({ code: String(data.code ?? "?"),
          message: String(data.message ?? "") });
        break;
      default:
        break; // unknown event types are forward compatibility, not errors
    }
    return true;
  }

  private applyTranscript(role: string, text: string, final: boolean): void {
    if (role !== "user" && role !== "assistant") return;
    const openIdx = this.openEntry[role];
    if (openIdx !== undefined) {
      const entry = this.transcript[openIdx];
      entry.text = text;
      entry.final = final;
      if (final) delete this.openEntry[role];
      return;
    }
    this.transcript.push({ role, text, final });
    if (!final) this.openEntry[role] = this.transcript.length - 1;
  }

  private applyToolState(data: Record<string, unknown>): void {
    const callId = String(data.call_id ?? "");
    if (!callId || !isToolState(data.state)) return;
    const next = data.state;
    let view = this.byCall.get(callId);
    if (view === undefined) {
      view = {
        callId,
        name: String(data.name ?? "execute"),
        task: String(data.task ?? ""),
        state: next,
      };
      this.byCall.set(callId, view);
      this.timeline.push(view);
    } else {
      if (STATE_RANK[next] < STATE_RANK[view.state]) return; // never backward
      if (STATE_RANK[view.state] === 2) return; // terminal states are final
      view.state = next;
    }
    if (typeof data.name === "string") view.name = data.name;
    if (typeof data.task === "string" && data.task) view.task = data.task;
    if (typeof data.skill === "string") view.skill = data.skill;
    if (typeof data.detail === "string") view.detail = data.detail;
    if (typeof data.latency_ms === "number") view.latencyMs = data.latency_ms;
    if (typeof data.steps === "number") view.steps = data.steps;
  }
}
