// Alert push stream client. Reads the server's SSE feed with fetch streaming
// (works in browsers and in node), tracks the feed cursor from SSE ids, and
// reconnects from that cursor after a drop so the caller never sees a gap.

import type { Alert } from "./types.js";

export type StreamState = "connecting" | "live" | "reconnecting" | "closed";

export interface SubscribeOptions {
  since?: number;
  onAlert: (seq: number, alert: Alert) => void;
  onState?: (state: StreamState) => void;
  retryMs?: number;
}

export interface Subscription {
  close(): void;
  readonly cursor: number;
}

export function subscribeAlerts(baseUrl: string, options: SubscribeOptions): Subscription {
  let cursor = options.since ?? 0;
  let closed = false;
  let controller: AbortController | null = null;
  const retryMs = options.retryMs ?? 1000;

  const setState = (state: StreamState) => options.onState?.(state);

  const consume = async () => {
    while (!closed) {
      controller = new AbortController();
      try {
        setState("connecting");
        const resp = await fetch(`${baseUrl}/alerts/stream?since=${cursor}`, {
          signal: controller.signal,
          headers: { Accept: "text/event-stream" },
        });
        if (!resp.ok || !resp.body) throw new Error(`stream status ${resp.status}`);
        setState("live");
        await readFrames(resp.body, (seq, alert) => {
          if (seq > cursor) {
            cursor = seq;
            options.onAlert(seq, alert);
          }
        });
        throw new Error("stream ended");
      } catch (err) {
        if (closed) break;
        setState("reconnecting");
        await sleep(retryMs);
      }
    }
    setState("closed");
  };
  void consume();

  return {
    close() {
      closed = true;
      controller?.abort();
    },
    get cursor() {
      return cursor;
    },
  };
}

async function readFrames(
  body: ReadableStream<Uint8Array>,
  emit: (seq: number, alert: Alert) => void,
): Promise<void> {
  const reader = body.getReader();
  const decoder = new TextDecoder();
  let buffer = "";
  for (;;) {
    const { done, value } = await reader.read();
    if (done) return;
    buffer += decoder.decode(value, { stream: true });
    let frameEnd: number;
    while ((frameEnd = buffer.indexOf("\n\n")) >= 0) {
      const frame = buffer.slice(0, frameEnd);
      buffer = buffer.slice(frameEnd + 2);
      const parsed = parseFrame(frame);
      if (parsed) emit(parsed.seq, parsed.alert);
    }
  }
}

function parseFrame(frame: string): { seq: number; alert: Alert } | null {
  let seq = 0;
  let data = "";
  for (const line of frame.split("\n")) {
    if (line.startsWith("id:")) seq = Number(line.slice(3).trim());
    else if (line.startsWith("data:")) data += line.slice(5).trim();
    // lines starting with ":" are heartbeats; ignore
  }
  if (!data) return null;
  try {
    return { seq, alert: JSON.parse(data) as Alert };
  } catch {
    return null;
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
