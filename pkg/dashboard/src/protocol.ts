/** Envelope shapes and helpers for talking to an RCP gateway. */

export type Op =
  | "read"
  | "write"
  | "execute"
  | "subscribe"
  | "unsubscribe"
  | "discover"
  | "status";

export type EnvelopeStatus =
  | "ok"
  | "accepted"
  | "in_progress"
  | "completed"
  | "failed"
  | "rejected"
  | "error";

export const TERMINAL_STATES = new Set<EnvelopeStatus>(["completed", "failed", "rejected"]);

export interface ErrorDetail {
  code: string;
  message: string;
  origin: string;
  remediation?: string;
}

export interface Envelope {
  protocol_version?: string;
  kind?: "request" | "response" | "event";
  type?: Op;
  path?: string;
  id?: string;
  timestamp?: string;
  status?: EnvelopeStatus;
  seq?: number;
  body?: unknown;
  error?: ErrorDetail;
  auth?: string;
  [extension: string]: unknown;
}

export interface Vec3 {
  x: number;
  y: number;
  z: number;
}

export interface Pose {
  position: Vec3;
  orientation: { x: number; y: number; z: number; w: number };
  frame_id: string;
  timestamp: string | number;
}

export interface AdapterHealth {
  name: string;
  ready: boolean;
  detail: string;
}

export interface HealthSnapshot {
  uptime_s: number;
  started_at: string;
  adapters: AdapterHealth[];
  sessions_active: number;
  queue_backpressure: { max_depth: number; sessions_at_bound: number; drops_total: number };
  recent_log: { level: string; message: string; timestamp: string; origin?: string }[];
  commands: Record<string, number>;
}

/** Kind per the wire rules: `type` implies request, otherwise `kind` decides. */
export function kindOf(env: Envelope): "request" | "response" | "event" {
  if (env.type !== undefined) return "request";
  return env.kind === "event" ? "event" : "response";
}

export function request(op: Op, path?: string, id?: string, body?: unknown): Envelope {
  const env: Envelope = { type: op };
  if (path !== undefined) env.path = path;
  if (id !== undefined) env.id = id;
  if (body !== undefined) env.body = body;
  return env;
}

let counter = 0;

export function freshId(prefix: string): string {
  counter += 1;
  return `${prefix}-${Date.now().toString(36)}-${counter}`;
}

export function decode(text: string): Envelope {
  const parsed: unknown = JSON.parse(text);
  if (typeof parsed !== "object" || parsed === null || Array.isArray(parsed)) {
    throw new Error("frame is not an envelope object");
  }
  return parsed as Envelope;
}
