/** Ordered event subscription with reconnect and resume.
 *
 * The gateway delivers at-least-once; duplicates are dropped by the
 * projection's seq check, and after a connection loss the client
 * resubscribes from the last seen seq + 1, so the fold never gaps.
 * A gap observed on a live socket (should not happen) also forces a
 * resubscribe rather than folding out of order.
 */

import { SessionEvent } from "./wire.js";

export type StreamStatus = "connecting" | "live" | "reconnecting";

export interface EventSocket {
  onmessage: ((event: { data: string }) => void) | null;
  onclose: (() => void) | null;
  onopen: (() => void) | null;
  close(): void;
}

export type SocketFactory = (url: string) => EventSocket;

export interface StreamOptions {
  /** Base ws URL, e.g. ws://host/session/s1/events */
  url: string;
  onEvent: (event: SessionEvent) => void;
  onStatus?: (status: StreamStatus) => void;
  socketFactory?: SocketFactory;
  reconnectDelayMs?: number;
}

export class EventStream {
  private lastSeq = 0;
  private socket: EventSocket | null = null;
  private stopped = false;
  private readonly factory: SocketFactory;
  private readonly delay: number;

  constructor(private readonly options: StreamOptions) {
    this.factory = options.socketFactory ?? ((url) => new WebSocket(url) as unknown as EventSocket);
    this.delay = options.reconnectDelayMs ?? 1000;
  }

  start(): void {
    this.connect();
  }

  stop(): void {
    this.stopped = true;
    this.socket?.close();
  }

  get seenSeq(): number {
    return this.lastSeq;
  }

  private connect(): void {
    this.options.onStatus?.(this.lastSeq === 0 ? "connecting" : "reconnecting");
    const url = `${this.options.url}?from_seq=${this.lastSeq + 1}`;
    const socket = this.factory(url);
    this.socket = socket;
    socket.onopen = () => this.options.onStatus?.("live");
    socket.onmessage = (message) => this.handle(message.data);
    socket.onclose = () => {
      if (this.stopped) return;
      this.options.onStatus?.("reconnecting");
      setTimeout(() => this.connect(), this.delay);
    };
  }

  private handle(data: string): void {
    const event = SessionEvent.parse(JSON.parse(data));
    if (event.seq <= this.lastSeq) return; // duplicate from an overlap replay
    if (event.seq > this.lastSeq + 1) {
      // ordered delivery broke; resubscribe from the last good point
      this.socket?.close();
      return;
    }
    this.lastSeq = event.seq;
    this.options.onEvent(event);
  }
}
