/** Scripted gateway double for client tests.
 *
 * Speaks the documented wire shapes and reuses the real server's message
 * strings (the backend test suite pins them), so byte-for-byte rendering
 * checks are meaningful.
 */

import type {
  SocketHandle,
  SocketHandlers,
  StreamHandle,
  StreamHandlers,
  Transport,
} from "../src/client.js";
import type { Envelope, HealthSnapshot, Pose } from "../src/protocol.js";

export const MOVE_DONE = "Command /action/move_to executed successfully.";
export const RESET_DONE = "Command /service/reset_system executed successfully.";
export const RANGE_MSG =
  "Failed to apply configuration: parameter 'speed_limit' exceeds allowed range.";
export const DUP_MSG =
  "Warning: action '/action/move_to' is currently in progress; rejecting duplicate request.";

const TS = "2025-05-29T14:12:04Z";

interface CommandRecord {
  id: string;
  path: string;
  state: string;
  progress?: number;
  message?: string;
  error?: { code: string; message: string; origin: string };
}

export class FakeGateway implements Transport {
  wsBlocked = false;
  requiredToken: string | null = null;
  /** Everything the "server" saw, for cross-checking against client.traffic. */
  serverLog: string[] = [];
  records = new Map<string, CommandRecord>();
  moveTicks = 2; // in_progress events before completion

  private ws: SocketHandlers | null = null;
  private sse: StreamHandlers | null = null;
  private ssePaths: string[] = [];
  private seq = new Map<string, number>();
  private inFlight = new Set<string>();
  private authed = false;

  // --- Transport --------------------------------------------------------------

  openSocket(url: string, _protocols: string[], handlers: SocketHandlers): SocketHandle {
    this.serverLog.push(`WS ${new URL(url).pathname}`);
    if (this.wsBlocked) {
      queueMicrotask(() => handlers.onError("connection refused"));
      return { send: () => undefined, close: () => undefined };
    }
    this.ws = handlers;
    queueMicrotask(() => handlers.onOpen());
    return {
      send: (text) => this.onRequest(JSON.parse(text) as Envelope, "ws"),
      close: () => handlers.onClose(),
    };
  }

  openStream(url: string, handlers: StreamHandlers): StreamHandle {
    const parsed = new URL(url);
    this.serverLog.push(`GET ${parsed.pathname}`);
    if (this.requiredToken !== null && parsed.searchParams.get("token") !== this.requiredToken) {
      queueMicrotask(() => handlers.onError(401, "missing or unknown token"));
      return { close: () => undefined };
    }
    this.sse = handlers;
    this.ssePaths = parsed.searchParams.getAll("path");
    queueMicrotask(() => handlers.onOpen());
    return { close: () => undefined };
  }

  async http(method: "GET" | "POST", url: string, body?: string) {
    const path = new URL(url).pathname;
    this.serverLog.push(`${method} ${path}`);
    if (method === "POST" && path === "/rcp") {
      const response = this.handle(JSON.parse(body ?? "{}") as Envelope);
      return { status: response.error ? 400 : 200, text: JSON.stringify(response) };
    }
    const match = path.match(/^\/rcp\/commands\/(.+)$/);
    if (method === "GET" && match) {
      const record = this.records.get(match[1]!);
      if (!record) return { status: 404, text: '{"error":{"code":"UNKNOWN_PATH"}}' };
      return { status: 200, text: JSON.stringify(record) };
    }
    return { status: 404, text: "{}" };
  }

  // --- telemetry injection ------------------------------------------------------

  publishPose(pose: Pose): void {
    this.event("/sensor/pose", { status: "ok", body: pose });
  }

  publishHealth(snapshot: HealthSnapshot): void {
    this.event("/event/status", { status: "ok", body: snapshot });
  }

  // --- protocol behavior -----------------------------------------------------------

  private onRequest(env: Envelope, via: "ws"): void {
    void via;
    const response = this.handle(env);
    this.emit(response);
  }

  private handle(env: Envelope): Envelope {
    this.serverLog.push(`${env.type} ${env.path ?? ""}`.trim());
    if (this.requiredToken !== null && !this.authed) {
      if (env.auth !== this.requiredToken) {
        return this.response(env, {
          status: "error",
          error: { code: "UNAUTHORIZED", message: "missing or unknown token", origin: "security" },
        });
      }
      this.authed = true;
    }
    switch (env.type) {
      case "subscribe":
        return this.response(env, { status: "ok", body: { sub_id: `sub-${env.path}`, path: env.path } });
      case "read":
        if (env.path === "/sensor/pose") {
          return this.response(env, { status: "ok", body: defaultPose() });
        }
        return this.response(env, {
          status: "error",
          error: { code: "UNKNOWN_PATH", message: `no resource at ${env.path}`, origin: "registry" },
        });
      case "write":
        return this.handleWrite(env);
      case "execute":
        return this.handleExecute(env);
      default:
        return this.response(env, {
          status: "error",
          error: { code: "OP_NOT_SUPPORTED", message: `unhandled ${env.type}`, origin: "lifecycle" },
        });
    }
  }

  private handleWrite(env: Envelope): Envelope {
    const value = env.body as number;
    if (env.path === "/param/speed_limit" && typeof value === "number" && value > 0 && value <= 5) {
      return this.response(env, { status: "ok", body: { applied: true, value } });
    }
    return this.response(env, {
      status: "failed",
      error: { code: "OUT_OF_RANGE", message: RANGE_MSG, origin: "adapter" },
    });
  }

  private handleExecute(env: Envelope): Envelope {
    const id = env.id!;
    const path = env.path!;
    if (this.inFlight.has(path)) {
      const error = { code: "CONFLICT", message: DUP_MSG, origin: "lifecycle" };
      this.records.set(id, { id, path, state: "rejected", message: DUP_MSG, error });
      return this.response(env, { status: "rejected", body: { command_id: id }, error });
    }
    this.inFlight.add(path);
    this.records.set(id, { id, path, state: "accepted" });
    const done = path === "/service/reset_system" ? RESET_DONE : MOVE_DONE;
    const ticks = path === "/service/reset_system" ? 1 : this.moveTicks;
    queueMicrotask(() => this.runCommand(id, path, ticks, done));
    return this.response(env, { status: "accepted", body: { command_id: id } });
  }

  private runCommand(id: string, path: string, ticks: number, doneMessage: string): void {
    for (let i = 1; i <= ticks; i += 1) {
      const progress = i / (ticks + 1);
      this.records.set(id, { id, path, state: "in_progress", progress });
      this.event(path, { status: "in_progress", id, body: { command_id: id, state: "in_progress", progress } });
    }
    this.records.set(id, { id, path, state: "completed", progress: 1.0, message: doneMessage });
    this.event(path, {
      status: "completed", id,
      body: { command_id: id, state: "completed", progress: 1.0, message: doneMessage },
    });
    this.inFlight.delete(path);
  }

  private response(req: Envelope, fields: Partial<Envelope>): Envelope {
    return { kind: "response", id: req.id, timestamp: TS, ...fields } as Envelope;
  }

  private event(path: string, fields: Partial<Envelope>): void {
    const seq = this.seq.get(path) ?? 0;
    this.seq.set(path, seq + 1);
    this.emit({ kind: "event", path, timestamp: TS, seq, ...fields } as Envelope);
  }

  private emit(env: Envelope): void {
    queueMicrotask(() => {
      const text = JSON.stringify(env);
      if (this.ws) {
        // a ws session receives its subscriptions plus its own command feedback
        this.ws.onMessage(text);
      } else if (this.sse && (env.kind !== "event" || this.ssePaths.includes(env.path ?? ""))) {
        // an sse stream carries subscribed paths only; feedback must be polled
        this.sse.onEvent("rcp-event", text);
      }
    });
  }
}

export function defaultPose(x = 0, y = 0): Pose {
  return {
    position: { x, y, z: 0 },
    orientation: { x: 0, y: 0, z: 0, w: 1 },
    frame_id: "map",
    timestamp: TS,
  };
}

export function defaultHealth(): HealthSnapshot {
  return {
    uptime_s: 12.5,
    started_at: TS,
    adapters: [
      { name: "simbot", ready: true, detail: "tick loop running" },
      { name: "mcp", ready: false, detail: "not connected" },
    ],
    sessions_active: 1,
    queue_backpressure: { max_depth: 0, sessions_at_bound: 0, drops_total: 0 },
    recent_log: [],
    commands: { accepted: 0, in_progress: 0, completed: 0, failed: 0, rejected: 0 },
  };
}

export function settle(rounds = 8): Promise<void> {
  let chain: Promise<void> = Promise.resolve();
  for (let i = 0; i < rounds; i += 1) chain = chain.then(() => undefined);
  return chain;
}
