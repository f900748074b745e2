// WebSocket stream client with exponential backoff. On connection loss the
// UI shows a banner and retries; it never fabricates data.

import { parsePayload, StreamPayload } from "./types.js";

export class BackoffPolicy {
  private attempt = 0;

  constructor(
    readonly baseMs = 500,
    readonly maxMs = 8000,
  ) {}

  nextDelayMs(): number {
    const delay = Math.min(this.maxMs, this.baseMs * 2 ** this.attempt);
    this.attempt += 1;
    return delay;
  }

  reset(): void {
    this.attempt = 0;
  }
}

export interface SocketLike {
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  close(): void;
}

export interface StreamHandlers {
  onPayload(payload: StreamPayload): void;
  onStatus(connected: boolean, detail: string): void;
}

export class StreamClient {
  private socket: SocketLike | null = null;
  private closed = false;
  private timer: ReturnType<typeof setTimeout> | null = null;
  readonly backoff: BackoffPolicy;

  constructor(
    private readonly url: string,
    private readonly handlers: StreamHandlers,
    private readonly socketFactory: (url: string) => SocketLike = (u) =>
      new WebSocket(u) as unknown as SocketLike,
    backoff?: BackoffPolicy,
  ) {
    this.backoff = backoff ?? new BackoffPolicy();
  }

  connect(): void {
    if (this.closed) return;
    const socket = this.socketFactory(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.backoff.reset();
      this.handlers.onStatus(true, "connected");
    };
    socket.onmessage = (ev) => {
      const payload = parsePayload(String(ev.data));
      if (payload) this.handlers.onPayload(payload); // malformed frames are dropped
    };
    socket.onerror = () => {
      /* close follows; handled there */
    };
    socket.onclose = () => {
      if (this.closed) return;
      const delay = this.backoff.nextDelayMs();
      this.handlers.onStatus(false, `connection lost, retrying in ${delay} ms`);
      this.timer = setTimeout(() => this.connect(), delay);
    };
  }

  close(): void {
    this.closed = true;
    if (this.timer) clearTimeout(this.timer);
    this.socket?.close();
  }
}
