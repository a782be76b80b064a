// DOM rendering for the console panes. Deliberately dumb: wipe and redraw
// from ConsoleState on every change; state sizes here are tiny.

import { ConsoleState } from "./state.js";
import { ToolCallView } from "./types.js";

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderTranscript(state: ConsoleState, pane: HTMLElement): void {
  pane.replaceChildren();
  for (const entry of state.transcript) {
    const row = el("div", `entry ${entry.role}${entry.final ? "" : " partial"}`);
    row.appendChild(el("span", "role", entry.role === "user" ? "you" : "agent"));
    row.appendChild(el("span", "text", entry.text + (entry.final ? "" : " …")));
    pane.appendChild(row);
  }
  pane.scrollTop = pane.scrollHeight;
}

function describe(view: ToolCallView): string {
  const bits: string[] = [view.state];
  if (view.skill) bits.push(view.skill);
  if (view.steps !== undefined) bits.push(`${view.steps} steps`);
  if (view.latencyMs !== undefined) bits.push(`${view.latencyMs} ms`);
  if (view.detail) bits.push(view.detail);
  return bits.join(" · ");
}

export function renderTimeline(state: ConsoleState, pane: HTMLElement,
                               onVerdict: (callId: string, verdict: "approve" | "deny") => void): void {
  pane.replaceChildren();
  for (const view of state.timeline) {
    const card = el("div", `call ${view.state}`);
    card.appendChild(el("div", "task", view.task || view.name));
    card.appendChild(el("div", "meta", describe(view)));
    if (view.state === "pending-approval") {
      const actions = el("div", "actions");
      const approve = el("button", "approve", "approve") as HTMLButtonElement;
      approve.onclick = () => onVerdict(view.callId, "approve");
      const deny = el("button", "deny", "deny") as HTMLButtonElement;
      deny.onclick = () => onVerdict(view.callId, "deny");
      actions.append(approve, deny);
      card.appendChild(actions);
    }
    pane.appendChild(card);
  }
}

export function renderStatus(state: ConsoleState, connection: string,
                             pane: HTMLElement): void {
  pane.replaceChildren();
  const media = state.media;
  pane.appendChild(el("span", "pill", connection));
  pane.appendChild(el("span", "pill", `phase ${state.phase}`));
  pane.appendChild(el("span", "pill", `turns ${state.turns}`));
  pane.appendChild(el("span", "pill", media.mode));
  pane.appendChild(el("span", "pill", `${media.chunksSent} chunks`));
  pane.appendChild(el("span", "pill", `${media.framesSent} frames`));
  if (media.bargeInsDropped > 0) {
    pane.appendChild(el("span", "pill warn", `${media.bargeInsDropped} barge-in drops`));
  }
  if (state.surfaced.length > 0) {
    const last = state.surfaced[state.surfaced.length - 1];
    pane.appendChild(el("span", "pill warn", `${last.code}: ${last.message}`));
  }
}
