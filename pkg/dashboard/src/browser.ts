/** Browser-native transport: WebSocket, fetch-based SSE reader, fetch HTTP. */

import type { SocketHandle, SocketHandlers, StreamHandle, StreamHandlers, Transport } from "./client.js";

export class BrowserTransport implements Transport {
  openSocket(url: string, protocols: string[], handlers: SocketHandlers): SocketHandle {
    const socket = new WebSocket(url, protocols);
    socket.onopen = () => handlers.onOpen();
    socket.onmessage = (event) => {
      if (typeof event.data === "string") handlers.onMessage(event.data);
    };
    socket.onerror = () => handlers.onError("websocket error");
    socket.onclose = () => handlers.onClose();
    return {
      send: (text) => socket.send(text),
      close: () => socket.close(),
    };
  }

  openStream(url: string, handlers: StreamHandlers): StreamHandle {
    const controller = new AbortController();
    void this.pump(url, handlers, controller.signal);
    return { close: () => controller.abort() };
  }

  private async pump(url: string, handlers: StreamHandlers, signal: AbortSignal): Promise<void> {
    let response: Response;
    try {
      response = await fetch(url, { signal, headers: { Accept: "text/event-stream" } });
    } catch (err) {
      handlers.onError(0, String(err));
      return;
    }
    if (!response.ok || response.body === null) {
      handlers.onError(response.status, await response.text());
      return;
    }
    handlers.onOpen();
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    try {
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        buffer += decoder.decode(value, { stream: true });
        let cut: number;
        while ((cut = buffer.indexOf("\n\n")) >= 0) {
          const raw = buffer.slice(0, cut);
          buffer = buffer.slice(cut + 2);
          this.emit(raw, handlers);
        }
      }
      handlers.onError(0, "stream ended");
    } catch (err) {
      if (!signal.aborted) handlers.onError(0, String(err));
    }
  }

  private emit(frame: string, handlers: StreamHandlers): void {
    let name = "message";
    const data: string[] = [];
    for (const line of frame.split("\n")) {
      if (line.startsWith(":")) continue; // heartbeat comment
      if (line.startsWith("event:")) name = line.slice(6).trim();
      if (line.startsWith("data:")) data.push(line.slice(5).trim());
    }
    if (data.length > 0) handlers.onEvent(name, data.join("\n"));
  }

  async http(method: "GET" | "POST", url: string, body?: string) {
    const response = await fetch(url, {
      method,
      body,
      headers: body !== undefined ? { "Content-Type": "application/json" } : undefined,
    });
    return { status: response.status, text: await response.text() };
  }
}
