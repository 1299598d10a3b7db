/** UI session state, derived exclusively from gateway responses and events. */

import type { Envelope, ErrorDetail, HealthSnapshot, Pose, Vec3 } from "./protocol.js";
import { TERMINAL_STATES } from "./protocol.js";

export type CardState = "sent" | "accepted" | "in_progress" | "completed" | "failed" | "rejected";

export interface CommandCard {
  id: string;
  label: string;
  path: string;
  state: CardState;
  progress: number | null;
  /** Server-provided text, rendered verbatim. */
  message: string | null;
  error: ErrorDetail | null;
}

/** Lifecycle rank; updates never move a card backwards and terminal cards freeze. */
const STATE_RANK: Record<CardState, number> = {
  sent: 0,
  accepted: 1,
  in_progress: 2,
  completed: 3,
  failed: 3,
  rejected: 3,
};

export const TRAIL_LIMIT = 500;

export class UiSessionModel {
  endpoint = "";
  token: string | null = null;
  connection: "offline" | "ws" | "sse" = "offline";
  connectionDetail = "";

  poseTrail: Vec3[] = [];
  latestPose: Pose | null = null;
  health: HealthSnapshot | null = null;
  cards: CommandCard[] = [];

  pushPose(pose: Pose): void {
    this.latestPose = pose;
    this.poseTrail.push({ ...pose.position });
    if (this.poseTrail.length > TRAIL_LIMIT) {
      this.poseTrail.splice(0, this.poseTrail.length - TRAIL_LIMIT);
    }
  }

  setHealth(snapshot: HealthSnapshot): void {
    this.health = snapshot;
  }

  setConnection(mode: "offline" | "ws" | "sse", detail = ""): void {
    this.connection = mode;
    this.connectionDetail = detail;
  }

  openCard(id: string, label: string, path: string): CommandCard {
    const card: CommandCard = {
      id, label, path, state: "sent", progress: null, message: null, error: null,
    };
    this.cards.unshift(card);
    return card;
  }

  card(id: string): CommandCard | undefined {
    return this.cards.find((c) => c.id === id);
  }

  updateCard(id: string, update: {
    state?: CardState;
    progress?: number | null;
    message?: string | null;
    error?: ErrorDetail | null;
  }): void {
    const card = this.card(id);
    if (card === undefined) return;
    if (update.state !== undefined) {
      const frozen = STATE_RANK[card.state] === 3;
      const regression = STATE_RANK[update.state] < STATE_RANK[card.state];
      if (frozen || regression) return;
      card.state = update.state;
    }
    if (update.progress !== undefined && update.progress !== null) {
      card.progress = update.progress;
    }
    if (update.message !== undefined && update.message !== null) {
      card.message = update.message;
    }
    if (update.error !== undefined && update.error !== null) {
      card.error = update.error;
    }
  }

  /** Map one feedback event or response onto its command card. */
  applyCommandEnvelope(id: string, env: Envelope): void {
    const body = (env.body ?? {}) as { progress?: number; message?: string };
    const status = env.status;
    const state: CardState | undefined =
      status === "accepted" || status === "in_progress" || status === "completed" ||
      status === "failed" || status === "rejected" ? status
      : status === "error" ? "failed"
      : undefined;
    this.updateCard(id, {
      state,
      progress: typeof body.progress === "number" ? body.progress : undefined,
      message: typeof body.message === "string" ? body.message : env.error?.message,
      error: env.error ?? undefined,
    });
  }

  /** Map one polled command record onto its card. */
  applyCommandRecord(record: {
    id: string; state: string; progress?: number; message?: string;
    error?: ErrorDetail;
  }): void {
    this.updateCard(record.id, {
      state: record.state as CardState,
      progress: record.progress,
      message: record.message ?? record.error?.message,
      error: record.error,
    });
  }

  isTerminal(id: string): boolean {
    const card = this.card(id);
    return card !== undefined && TERMINAL_STATES.has(card.state as never);
  }
}
