import { describe, expect, it, vi } from "vitest";

import { EventStream, EventSocket } from "../src/stream.js";
import type { SessionEvent } from "../src/wire.js";

class FakeSocket implements EventSocket {
  onmessage: ((event: { data: string }) => void) | null = null;
  onclose: (() => void) | null = null;
  onopen: (() => void) | null = null;
  closed = false;

  constructor(public readonly url: string) {}

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  open(): void {
    this.onopen?.();
  }

  push(event: object): void {
    this.onmessage?.({ data: JSON.stringify(event) });
  }
}

function frame(seq: number): object {
  return { seq, time: seq, type: "frame_seen", frame: "ID=0 [00 68]" };
}

function harness() {
  const sockets: FakeSocket[] = [];
  const seen: SessionEvent[] = [];
  const statuses: string[] = [];
  const stream = new EventStream({
    url: "ws://bench/session/s1/events",
    onEvent: (e) => seen.push(e),
    onStatus: (s) => statuses.push(s),
    socketFactory: (url) => {
      const socket = new FakeSocket(url);
      sockets.push(socket);
      return socket;
    },
    reconnectDelayMs: 1,
  });
  return { stream, sockets, seen, statuses };
}

describe("event stream client", () => {
  it("subscribes from seq 1 and forwards in order", () => {
    const { stream, sockets, seen } = harness();
    stream.start();
    expect(sockets[0]!.url).toContain("from_seq=1");
    sockets[0]!.open();
    sockets[0]!.push(frame(1));
    sockets[0]!.push(frame(2));
    expect(seen.map((e) => e.seq)).toEqual([1, 2]);
  });

  it("drops duplicates from overlap replays", () => {
    const { stream, sockets, seen } = harness();
    stream.start();
    sockets[0]!.push(frame(1));
    sockets[0]!.push(frame(1));
    sockets[0]!.push(frame(2));
    expect(seen.map((e) => e.seq)).toEqual([1, 2]);
  });

  it("resumes after a drop from the last seen seq", async () => {
    vi.useFakeTimers();
    try {
      const { stream, sockets, seen, statuses } = harness();
      stream.start();
      sockets[0]!.open();
      sockets[0]!.push(frame(1));
      sockets[0]!.push(frame(2));
      sockets[0]!.close(); // connection lost
      await vi.advanceTimersByTimeAsync(5);
      expect(sockets.length).toBe(2);
      expect(sockets[1]!.url).toContain("from_seq=3");
      sockets[1]!.open();
      sockets[1]!.push(frame(3));
      expect(seen.map((e) => e.seq)).toEqual([1, 2, 3]);
      expect(statuses).toEqual(["connecting", "live", "reconnecting", "reconnecting", "live"]);
    } finally {
      vi.useRealTimers();
    }
  });

  it("treats a live gap as a broken stream and resubscribes", async () => {
    vi.useFakeTimers();
    try {
      const { stream, sockets, seen } = harness();
      stream.start();
      sockets[0]!.push(frame(1));
      sockets[0]!.push(frame(5)); // gap: 2..4 missing
      expect(seen.map((e) => e.seq)).toEqual([1]);
      expect(sockets[0]!.closed).toBe(true);
      await vi.advanceTimersByTimeAsync(5);
      expect(sockets[1]!.url).toContain("from_seq=2");
    } finally {
      vi.useRealTimers();
    }
  });

  it("stop() prevents reconnects", async () => {
    vi.useFakeTimers();
    try {
      const { stream, sockets } = harness();
      stream.start();
      stream.stop();
      await vi.advanceTimersByTimeAsync(10);
      expect(sockets.length).toBe(1);
    } finally {
      vi.useRealTimers();
    }
  });

  it("rejects malformed events loudly", () => {
    const { stream, sockets } = harness();
    stream.start();
    expect(() => sockets[0]!.push({ seq: 1, type: "nonsense" })).toThrow();
  });
});
