/** Wire types for the gateway, mirroring docs/wire.md.
 *
 * Every inbound payload is validated at the boundary with zod so a
 * drifting server surfaces as a loud parse error instead of NaNs in
 * the view.
 */

import { z } from "zod";

export const AnnouncedVariable = z.object({
  index: z.number().int(),
  min: z.number().int(),
  max: z.number().int(),
  granularity: z.number().int(),
});
export type AnnouncedVariable = z.infer<typeof AnnouncedVariable>;

export const RegistryEntry = z.object({
  address: z.number().int(),
  liveness: z.object({
    state: z.enum(["alive", "suspect"]),
    last_reply: z.number().int(),
    missed: z.number().int(),
  }),
  variables: z.array(AnnouncedVariable),
});
export type RegistryEntry = z.infer<typeof RegistryEntry>;

const eventBase = {
  seq: z.number().int().positive(),
  time: z.number().int(),
};

export const SessionEvent = z.discriminatedUnion("type", [
  z.object({ ...eventBase, type: z.literal("registry_changed"), registry: z.array(RegistryEntry) }),
  z.object({ ...eventBase, type: z.literal("frame_seen"), frame: z.string() }),
  z.object({
    ...eventBase,
    type: z.literal("level_changed"),
    address: z.number().int(),
    var_index: z.number().int(),
    level: z.number().int(),
  }),
  z.object({ ...eventBase, type: z.literal("disconnect_detected"), address: z.number().int() }),
  z.object({ ...eventBase, type: z.literal("command_rejected"), action: z.string(), reason: z.string() }),
]);
export type SessionEvent = z.infer<typeof SessionEvent>;

export const SessionInfo = z.object({
  session_id: z.string(),
  config: z.object({
    n_slots: z.number().int(),
    rows: z.number().int(),
    cols: z.number().int(),
    t_power_ms: z.number().int(),
    t_bus_ms: z.number().int(),
    heartbeat: z.object({
      interval_ms: z.number().int(),
      miss_threshold: z.number().int(),
      reply_window_ms: z.number().int(),
    }),
  }),
  ratio: z.number(),
});
export type SessionInfo = z.infer<typeof SessionInfo>;

export const PaletteEntry = z.object({
  name: z.string(),
  module_name: z.string(),
  variables: z.array(
    z.object({
      name: z.string(),
      unit: z.string(),
      min: z.number().int(),
      max: z.number().int(),
      granularity: z.number().int(),
      index: z.number().int(),
    }),
  ),
});
export type PaletteEntry = z.infer<typeof PaletteEntry>;
export const Palette = z.array(PaletteEntry);

export const CommandResult = z.union([
  z.object({ status: z.literal("accepted") }),
  z.object({ status: z.literal("rejected"), reason: z.string() }),
]);
export type CommandResult = z.infer<typeof CommandResult>;

export type Command =
  | { action: "plug"; slot: number; descriptor: string }
  | { action: "unplug"; slot: number }
  | { action: "set"; address: number; var_index: number; value: number }
  | { action: "load_csv"; csv: string }
  | {
      action: "map";
      column: string;
      address: number;
      var_index: number;
      domain_min?: number;
      domain_max?: number;
      clamp?: boolean;
    }
  | { action: "replay"; cadence_ms: number };
