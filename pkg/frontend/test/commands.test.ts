import { describe, expect, it } from "vitest";

import { GatewayClient, FetchLike } from "../src/commands.js";

function fakeFetch(responses: Record<string, unknown>): { fetch: FetchLike; calls: Array<{ url: string; body?: unknown }> } {
  const calls: Array<{ url: string; body?: unknown }> = [];
  const fetch: FetchLike = async (url, init) => {
    calls.push({ url, body: init?.body ? JSON.parse(init.body as string) : undefined });
    const match = Object.entries(responses).find(([suffix]) => url.endsWith(suffix));
    if (!match) throw new Error(`unexpected url ${url}`);
    return { ok: true, json: async () => match[1] };
  };
  return { fetch, calls };
}

describe("gateway client", () => {
  it("creates a session and validates the response shape", async () => {
    const { fetch } = fakeFetch({
      "/session": {
        session_id: "s1",
        config: {
          n_slots: 6,
          rows: 2,
          cols: 3,
          t_power_ms: 10,
          t_bus_ms: 1,
          heartbeat: { interval_ms: 500, miss_threshold: 3, reply_window_ms: 50 },
        },
        ratio: 1.0,
      },
    });
    const client = new GatewayClient("http://bench", fetch);
    const info = await client.createSession();
    expect(info.session_id).toBe("s1");
    expect(info.config.rows * info.config.cols).toBe(info.config.n_slots);
  });

  it("sends command envelopes verbatim", async () => {
    const { fetch, calls } = fakeFetch({ "/session/s1/command": { status: "accepted" } });
    const client = new GatewayClient("http://bench", fetch);
    const result = await client.send("s1", { action: "plug", slot: 2, descriptor: "fan" });
    expect(result).toEqual({ status: "accepted" });
    expect(calls[0]!.body).toEqual({ action: "plug", slot: 2, descriptor: "fan" });
  });

  it("surfaces rejections as data, not exceptions", async () => {
    const { fetch } = fakeFetch({
      "/session/s1/command": { status: "rejected", reason: "SlotOccupied" },
    });
    const client = new GatewayClient("http://bench", fetch);
    const result = await client.send("s1", { action: "unplug", slot: 9 });
    expect(result).toEqual({ status: "rejected", reason: "SlotOccupied" });
  });

  it("rejects off-contract responses", async () => {
    const { fetch } = fakeFetch({ "/session/s1/command": { ok: true } });
    const client = new GatewayClient("http://bench", fetch);
    await expect(client.send("s1", { action: "unplug", slot: 1 })).rejects.toThrow();
  });

  it("parses the module palette", async () => {
    const { fetch } = fakeFetch({
      "/descriptors": [
        {
          name: "fan",
          module_name: "fan",
          variables: [{ name: "airflow", unit: "level", min: 0, max: 255, granularity: 8, index: 0 }],
        },
      ],
    });
    const client = new GatewayClient("http://bench", fetch);
    const palette = await client.descriptors();
    expect(palette[0]!.variables[0]!.granularity).toBe(8);
  });
});
