// Websocket client for the control channel with resubscribe-and-backfill.
//
// On every (re)connect it subscribes from the last event seq it has seen, so
// the server replays whatever was missed; ConsoleState drops the overlap.
// Commands sent while disconnected are queued locally and flushed on
// reconnect rather than silently dropped.

import { Command, ControlEvent, isControlEvent } from "./types.js";

export type ConnectionStatus = "connecting" | "open" | "reconnecting" | "closed" | "error";

export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((event: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onerror: ((err?: unknown) => void) | null;
}

export type WsFactory = (url: string) => WebSocketLike;

export interface ControlClientOptions {
  wsFactory?: WsFactory;
  reconnectDelayMs?: number;
  maxReconnectDelayMs?: number;
  onEvent?: (event: ControlEvent) => void;
  onStatus?: (status: ConnectionStatus, detail?: string) => void;
  // Injectable timer so tests can run without real waiting.
  schedule?: (fn: () => void, ms: number) => unknown;
}

const defaultFactory: WsFactory = (url) =>
  new (globalThis as { WebSocket: new (url: string) => WebSocketLike }).WebSocket(url);

export class ControlClient {
  readonly url: string;
  lastSeq = 0;
  status: ConnectionStatus = "closed";
  queued: Command[] = [];

  private ws: WebSocketLike | null = null;
  private opts: Required<Pick<ControlClientOptions, "reconnectDelayMs" | "maxReconnectDelayMs">>
    & ControlClientOptions;
  private currentDelay: number;
  private stopped = false;

  constructor(url: string, options: ControlClientOptions = {}) {
    this.url = url;
    this.opts = {
      reconnectDelayMs: options.reconnectDelayMs ?? 500,
      maxReconnectDelayMs: options.maxReconnectDelayMs ?? 8000,
      ...options,
    };
    this.currentDelay = this.opts.reconnectDelayMs;
  }

  connect(): void {
    this.stopped = false;
    this.setStatus(this.status === "closed" ? "connecting" : "reconnecting");
    let ws: WebSocketLike;
    try {
      ws = (this.opts.wsFactory ?? defaultFactory)(this.url);
    } catch (err) {
      this.setStatus("error", String(err));
      this.scheduleReconnect();
      return;
    }
    this.ws = ws;
    ws.onopen = () => {
      this.currentDelay = this.opts.reconnectDelayMs;
      this.setStatus("open");
      this.raw({ cmd: "subscribe", from_seq: this.lastSeq });
      const backlog = this.queued.splice(0);
      for (const command of backlog) this.raw(command);
    };
    ws.onmessage = (event) => {
      let parsed: unknown;
      try {
        parsed = JSON.parse(String(event.data));
      } catch {
        return; // not ours; ignore
      }
      if (isControlEvent(parsed)) {
        if (parsed.ev > this.lastSeq) this.lastSeq = parsed.ev;
        this.opts.onEvent?.(parsed);
      }
    };
    ws.onclose = () => {
      this.ws = null;
      if (this.stopped) {
        this.setStatus("closed");
        return;
      }
      this.setStatus("reconnecting", "connection lost");
      this.scheduleReconnect();
    };
    ws.onerror = () => {
      // onclose follows; nothing else to do
    };
  }

  send(command: Command): boolean {
    if (this.status === "open" && this.ws !== null) {
      this.raw(command);
      return true;
    }
    this.queued.push(command);
    this.setStatus(this.status, `queued ${command.cmd} while disconnected`);
    return false;
  }

  close(): void {
    this.stopped = true;
    this.ws?.close();
    this.ws = null;
    this.setStatus("closed");
  }

  private raw(command: Command): void {
    this.ws?.send(JSON.stringify(command));
  }

  private scheduleReconnect(): void {
    if (this.stopped) return;
    const wait = this.currentDelay;
    this.currentDelay = Math.min(this.currentDelay * 2, this.opts.maxReconnectDelayMs);
    const schedule = this.opts.schedule ?? ((fn: () => void, ms: number) => setTimeout(fn, ms));
    schedule(() => {
      if (!this.stopped) this.connect();
    }, wait);
  }

  private setStatus(status: ConnectionStatus, detail?: string): void {
    this.status = status;
    this.opts.onStatus?.(status, detail);
  }
}
