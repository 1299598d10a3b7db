/** Gateway client: WebSocket first, SSE + HTTP fallback, traffic recorded.
 *
 * Only documented surface is ever touched: envelope ops over /rcp/ws or
 * POST /rcp, the event stream at GET /rcp/stream, and command polling at
 * GET /rcp/commands/{id}. The recorded `traffic` list lets tests prove it.
 */

import type { Envelope, ErrorDetail, HealthSnapshot, Op, Pose, Vec3 } from "./protocol.js";
import { TERMINAL_STATES, decode, freshId, request } from "./protocol.js";
import { UiSessionModel } from "./model.js";

export interface SocketHandlers {
  onOpen: () => void;
  onMessage: (text: string) => void;
  onError: (detail: string) => void;
  onClose: () => void;
}

export interface SocketHandle {
  send(text: string): void;
  close(): void;
}

export interface StreamHandlers {
  onOpen: () => void;
  onEvent: (name: string, data: string) => void;
  onError: (status: number, detail: string) => void;
}

export interface StreamHandle {
  close(): void;
}

/** Pluggable I/O so tests can run a scripted gateway. */
export interface Transport {
  openSocket(url: string, protocols: string[], handlers: SocketHandlers): SocketHandle;
  openStream(url: string, handlers: StreamHandlers): StreamHandle;
  http(method: "GET" | "POST", url: string, body?: string):
    Promise<{ status: number; text: string }>;
}

export interface TrafficRecord {
  channel: "ws" | "http" | "sse";
  detail: string; // "subscribe /sensor/pose", "POST /rcp", ...
}

export class GatewayError extends Error {
  constructor(public detail: ErrorDetail) {
    super(`[${detail.code}] ${detail.message}`);
  }
}

class SocketUnavailable extends Error {}

const POSE_SUFFIX = "/sensor/pose";
const STATUS_SUFFIX = "/event/status";

export class GatewayClient {
  readonly traffic: TrafficRecord[] = [];
  private socket: SocketHandle | null = null;
  private stream: StreamHandle | null = null;
  private pending = new Map<string, (env: Envelope) => void>();
  private tracked = new Set<string>();
  private authAttached = false;

  constructor(
    readonly model: UiSessionModel,
    private transport: Transport,
    private onChange: () => void,
    private pollIntervalMs = 300,
  ) {}

  get endpoint(): string {
    return this.model.endpoint;
  }

  /** Open the live session: WS preferred, SSE fallback when sockets fail. */
  async connect(endpoint: string, token: string | null): Promise<void> {
    this.model.endpoint = endpoint.replace(/\/+$/, "");
    this.model.token = token;
    try {
      await this.connectSocket();
      this.model.setConnection("ws");
    } catch (err) {
      if (!(err instanceof SocketUnavailable)) throw err;
      await this.connectStream();
      this.model.setConnection("sse", "websocket unavailable");
    }
    this.onChange();
  }

  close(): void {
    this.socket?.close();
    this.stream?.close();
    this.model.setConnection("offline");
    this.onChange();
  }

  // --- operator actions ------------------------------------------------------

  async sendMove(target: Vec3): Promise<string> {
    const id = freshId("move");
    this.model.openCard(id, `move_to (${target.x}, ${target.y}, ${target.z})`, "/action/move_to");
    this.onChange();
    await this.runCommand(id, request("execute", "/action/move_to", id, { target }));
    return id;
  }

  async reset(): Promise<string> {
    const id = freshId("reset");
    this.model.openCard(id, "reset_system", "/service/reset_system");
    this.onChange();
    await this.runCommand(id, request("execute", "/service/reset_system", id));
    return id;
  }

  async setParam(value: number): Promise<string> {
    const id = freshId("write");
    this.model.openCard(id, `speed_limit := ${value}`, "/param/speed_limit");
    this.onChange();
    const response = await this.request(request("write", "/param/speed_limit", id, value));
    if (response.status === "ok") {
      this.model.updateCard(id, { state: "completed", message: `applied: ${JSON.stringify(value)}` });
    } else {
      this.model.applyCommandEnvelope(id, response);
    }
    this.onChange();
    return id;
  }

  async readPose(): Promise<Pose> {
    const response = await this.request(request("read", "/sensor/pose", freshId("read")));
    if (response.error) throw new GatewayError(response.error);
    return response.body as Pose;
  }

  // --- command lifecycle -------------------------------------------------------

  private async runCommand(id: string, env: Envelope): Promise<void> {
    this.tracked.add(id);
    const response = await this.request(env);
    this.model.applyCommandEnvelope(id, response);
    this.onChange();
    if (response.status === "accepted" && this.socket === null) {
      void this.pollCommand(id); // no event channel for feedback: poll the record
    }
  }

  private async pollCommand(id: string): Promise<void> {
    while (!this.model.isTerminal(id)) {
      await sleep(this.pollIntervalMs);
      const url = `${this.endpoint}/rcp/commands/${id}${this.tokenQuery("?")}`;
      this.traffic.push({ channel: "http", detail: `GET /rcp/commands/${id}` });
      const got = await this.transport.http("GET", url);
      if (got.status !== 200) return;
      this.model.applyCommandRecord(JSON.parse(got.text));
      this.onChange();
    }
  }

  // --- request plumbing ----------------------------------------------------------

  private async request(env: Envelope): Promise<Envelope> {
    if (env.id === undefined) env.id = freshId("req");
    if (this.socket !== null) {
      this.traffic.push({ channel: "ws", detail: `${env.type} ${env.path ?? ""}`.trim() });
      if (!this.authAttached && this.model.token) {
        env.auth = this.model.token;
        this.authAttached = true;
      }
      const reply = new Promise<Envelope>((resolve) => this.pending.set(env.id!, resolve));
      this.socket.send(JSON.stringify(env));
      return reply;
    }
    this.traffic.push({ channel: "http", detail: "POST /rcp" });
    if (this.model.token) env.auth = this.model.token;
    const got = await this.transport.http("POST", `${this.endpoint}/rcp`, JSON.stringify(env));
    return decode(got.text);
  }

  private handleFrame(text: string): void {
    let env: Envelope;
    try {
      env = decode(text);
    } catch {
      return; // not an envelope (e.g. a segment): nothing here is that large
    }
    if (env.kind !== "event") {
      const waiter = env.id !== undefined ? this.pending.get(env.id) : undefined;
      if (waiter) {
        this.pending.delete(env.id!);
        waiter(env);
      }
      return;
    }
    if (env.path?.endsWith(POSE_SUFFIX) && isPose(env.body)) {
      this.model.pushPose(env.body);
    } else if (env.path?.endsWith(STATUS_SUFFIX)) {
      this.model.setHealth(env.body as HealthSnapshot);
    } else if (env.id !== undefined && this.tracked.has(env.id)) {
      this.model.applyCommandEnvelope(env.id, env);
      if (env.status !== undefined && TERMINAL_STATES.has(env.status)) {
        this.tracked.delete(env.id);
      }
    }
    this.onChange();
  }

  // --- channel setup ---------------------------------------------------------------

  private connectSocket(): Promise<void> {
    const url = this.endpoint.replace(/^http/, "ws") + "/rcp/ws";
    return new Promise((resolve, reject) => {
      let opened = false;
      const socket = this.transport.openSocket(url, ["rcp.v1"], {
        onOpen: () => {
          opened = true;
          this.socket = socket;
          this.subscribeAll().then(resolve, (err) => {
            this.socket = null;
            socket.close();
            reject(err);
          });
        },
        onMessage: (text) => this.handleFrame(text),
        onError: (detail) => {
          if (!opened) reject(new SocketUnavailable(detail));
        },
        onClose: () => {
          if (!opened) {
            reject(new SocketUnavailable("socket closed before opening"));
            return;
          }
          this.socket = null;
          this.model.setConnection("offline", "connection lost");
          this.onChange();
        },
      });
    });
  }

  private async subscribeAll(): Promise<void> {
    for (const path of [POSE_SUFFIX, STATUS_SUFFIX]) {
      const response = await this.request(request("subscribe", path, freshId("sub")));
      if (response.error) throw new GatewayError(response.error);
    }
  }

  private connectStream(): Promise<void> {
    const url = `${this.endpoint}/rcp/stream?path=${POSE_SUFFIX}&path=${STATUS_SUFFIX}` +
      this.tokenQuery("&");
    this.traffic.push({ channel: "sse", detail: "GET /rcp/stream" });
    return new Promise((resolve, reject) => {
      let settled = false;
      this.stream = this.transport.openStream(url, {
        onOpen: () => {
          settled = true;
          resolve();
        },
        onEvent: (_name, data) => this.handleFrame(data),
        onError: (status, detail) => {
          if (!settled) {
            settled = true;
            reject(new GatewayError({
              code: status === 401 ? "UNAUTHORIZED" : "BACKEND_UNAVAILABLE",
              message: detail,
              origin: "transport",
            }));
            return;
          }
          this.model.setConnection("offline", detail);
          this.onChange();
        },
      });
    });
  }

  private tokenQuery(sep: "?" | "&"): string {
    return this.model.token ? `${sep}token=${encodeURIComponent(this.model.token)}` : "";
  }
}

function isPose(body: unknown): body is Pose {
  return typeof body === "object" && body !== null &&
    "position" in body && "orientation" in body;
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
