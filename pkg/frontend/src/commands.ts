/** Command transport: fire commands, surface rejections, mutate nothing.
 *
 * The view only ever changes in response to stream events, so a
 * rejected command's sole client-side effect is the onRejected hook
 * (the stream will carry the matching command_rejected event too).
 */

import { Command, CommandResult, Palette, PaletteEntry, SessionInfo } from "./wire.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<{ ok: boolean; json(): Promise<unknown> }>;

export class GatewayClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch.bind(globalThis),
  ) {}

  async createSession(body: Record<string, unknown> = {}): Promise<SessionInfo> {
    const response = await this.fetchImpl(`${this.baseUrl}/session`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) throw new Error("session rejected");
    return SessionInfo.parse(await response.json());
  }

  async descriptors(): Promise<PaletteEntry[]> {
    const response = await this.fetchImpl(`${this.baseUrl}/descriptors`);
    return Palette.parse(await response.json());
  }

  async send(sessionId: string, command: Command): Promise<CommandResult> {
    const response = await this.fetchImpl(`${this.baseUrl}/session/${sessionId}/command`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(command),
    });
    return CommandResult.parse(await response.json());
  }
}
