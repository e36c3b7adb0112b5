/**
 * Thin websocket wrapper: JSON encode/decode plus connection callbacks.
 * All protocol logic lives in state.ts; this module only moves bytes.
 */
import type { ClientMessage, ServerMessage } from "./protocol.js";

export interface SessionClient {
  send(msg: ClientMessage): void;
  close(): void;
}

export interface ClientCallbacks {
  onMessage(msg: ServerMessage): void;
  onOpen(): void;
  onClose(): void;
}

export function connect(url: string, callbacks: ClientCallbacks): SessionClient {
  const ws = new WebSocket(url);
  ws.onopen = () => callbacks.onOpen();
  ws.onclose = () => callbacks.onClose();
  ws.onmessage = (ev: MessageEvent) => {
    let parsed: unknown;
    try {
      parsed = JSON.parse(typeof ev.data === "string" ? ev.data : "");
    } catch {
      return; // not JSON: nothing the view can use
    }
    if (typeof parsed === "object" && parsed !== null && "type" in parsed) {
      callbacks.onMessage(parsed as ServerMessage);
    }
  };
  return {
    send(msg: ClientMessage): void {
      if (ws.readyState === WebSocket.OPEN) {
        ws.send(JSON.stringify(msg));
      }
    },
    close(): void {
      ws.close();
    },
  };
}
