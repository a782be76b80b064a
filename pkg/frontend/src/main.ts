// Bootstraps the console: one ControlClient feeding one ConsoleState, with
// redraw-on-event rendering and the operator input controls.

import { decideApproval } from "./approval.js";
import { ControlClient } from "./client.js";
import { MAX_FRAME_BYTES, prepareFrameCommand } from "./media.js";
import { renderStatus, renderTimeline, renderTranscript } from "./render.js";
import { ConsoleState } from "./state.js";

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const state = new ConsoleState();
let client: ControlClient | null = null;
let connection = "disconnected";

function redraw(): void {
  renderTranscript(state, byId("transcript"));
  renderTimeline(state, byId("timeline"), (callId, verdict) => {
    const decision = decideApproval(state, callId, verdict);
    if (!decision.ok) {
      note(decision.reason);
      return;
    }
    client?.send(decision.command);
  });
  renderStatus(state, connection, byId("status"));
}

function note(message: string): void {
  byId("notice").textContent = message;
}

function connect(): void {
  client?.close();
  const url = (byId<HTMLInputElement>("url")).value.trim();
  client = new ControlClient(url, {
    onEvent: (event) => {
      state.apply(event);
      redraw();
    },
    onStatus: (status, detail) => {
      connection = status;
      if (detail) note(detail);
      redraw();
    },
  });
  client.connect();
}

function sendUtterance(): void {
  const input = byId<HTMLInputElement>("utterance");
  const text = input.value.trim();
  if (!text) return;
  client?.send({ cmd: "utterance", text });
  input.value = "";
}

async function attachFrame(file: File): Promise<void> {
  if (file.size > MAX_FRAME_BYTES) {
    note(`image is ${file.size} bytes; limit is ${MAX_FRAME_BYTES}`);
    return;
  }
  const bytes = new Uint8Array(await file.arrayBuffer());
  const result = prepareFrameCommand(bytes);
  if (!result.ok) {
    note(result.reason);
    return;
  }
  client?.send(result.command);
  note(`attached ${file.name} (${bytes.length} bytes)`);
}

function toggleMode(): void {
  const next = state.media.mode === "audio-only" ? "audio-and-video" : "audio-only";
  client?.send({ cmd: "mode", value: next });
}

window.addEventListener("DOMContentLoaded", () => {
  byId<HTMLButtonElement>("connect").onclick = connect;
  byId<HTMLButtonElement>("send").onclick = sendUtterance;
  byId<HTMLInputElement>("utterance").addEventListener("keydown", (event) => {
    if (event.key === "Enter") sendUtterance();
  });
  byId<HTMLInputElement>("frame").addEventListener("change", (event) => {
    const file = (event.target as HTMLInputElement).files?.[0];
    if (file) void attachFrame(file);
  });
  byId<HTMLButtonElement>("mode").onclick = toggleMode;
  redraw();
});
