// Approval gate logic: which skills are held for a human, and verdict
// validation against the mirrored timeline. The orchestrator enforces the
// gate server-side; this keeps the console honest about what it may send.

import { ConsoleState } from "./state.js";
import { Command } from "./types.js";

export const DEFAULT_SENSITIVE_SKILLS = ["email_draft", "cart"] as const;

export interface ApprovalPolicy {
  sensitiveSkills: Set<string>;
  autoApprove: boolean;
}

export function defaultPolicy(): ApprovalPolicy {
  return { sensitiveSkills: new Set(DEFAULT_SENSITIVE_SKILLS), autoApprove: false };
}

export function requiresApproval(policy: ApprovalPolicy, skill: string): boolean {
  return !policy.autoApprove && policy.sensitiveSkills.has(skill);
}

export type DecisionResult =
  | { ok: true; command: Command }
  | { ok: false; reason: string };

export function decideApproval(state: ConsoleState, callId: string,
                               verdict: "approve" | "deny"): DecisionResult {
  const view = state.timeline.find((t) => t.callId === callId);
  if (view === undefined) {
    return { ok: false, reason: `unknown call ${callId}` };
  }
  if (view.state !== "pending-approval") {
    return { ok: false, reason: `call ${callId} is ${view.state}, not pending-approval` };
  }
  return { ok: true, command: { cmd: "approval", call_id: callId, verdict } };
}
