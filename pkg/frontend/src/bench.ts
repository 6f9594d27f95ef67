/** The bench view model: a pure projection of the session event stream.
 *
 * Every piece of state visible in the UI is traceable to a received
 * SessionEvent; commands never mutate the view optimistically. The
 * projection is a plain reducer, so replaying a recorded log always
 * reproduces the identical view state (snapshot-testable), and a
 * reconnect simply resumes folding where the seq left off.
 */

import type { RegistryEntry, SessionEvent } from "./wire.js";

export interface FrameLogEntry {
  seq: number;
  time: number;
  frame: string;
}

export interface Rejection {
  seq: number;
  time: number;
  action: string;
  reason: string;
}

export interface BenchState {
  lastSeq: number;
  time: number;
  registry: RegistryEntry[];
  /** "address:var_index" -> current level; only announced variables appear. */
  levels: Record<string, number>;
  frames: FrameLogEntry[];
  rejections: Rejection[];
  /** address -> detection time, for the fade marker on a cleared slot. */
  fading: Record<number, number>;
}

export const FRAME_LOG_LIMIT = 200;

export function initialBenchState(): BenchState {
  return {
    lastSeq: 0,
    time: 0,
    registry: [],
    levels: {},
    frames: [],
    rejections: [],
    fading: {},
  };
}

export function levelKey(address: number, varIndex: number): string {
  return `${address}:${varIndex}`;
}

export function project(state: BenchState, event: SessionEvent): BenchState {
  if (event.seq <= state.lastSeq) return state; // at-least-once delivery: drop duplicates
  const next: BenchState = { ...state, lastSeq: event.seq, time: event.time };
  switch (event.type) {
    case "registry_changed": {
      next.registry = event.registry;
      const present = new Set(event.registry.map((entry) => entry.address));
      // gauges show only levels the registry still vouches for
      next.levels = Object.fromEntries(
        Object.entries(state.levels).filter(([key]) => present.has(Number(key.split(":")[0]))),
      );
      // a re-announced address is live again: clear its fade marker
      next.fading = Object.fromEntries(
        Object.entries(state.fading).filter(([address]) => !present.has(Number(address))),
      );
      return next;
    }
    case "level_changed": {
      next.levels = { ...state.levels, [levelKey(event.address, event.var_index)]: event.level };
      return next;
    }
    case "frame_seen": {
      const entry: FrameLogEntry = { seq: event.seq, time: event.time, frame: event.frame };
      next.frames = [...state.frames.slice(-(FRAME_LOG_LIMIT - 1)), entry];
      return next;
    }
    case "disconnect_detected": {
      next.fading = { ...state.fading, [event.address]: event.time };
      return next;
    }
    case "command_rejected": {
      next.rejections = [
        ...state.rejections,
        { seq: event.seq, time: event.time, action: event.action, reason: event.reason },
      ];
      return next;
    }
  }
}

export function projectAll(events: SessionEvent[], state = initialBenchState()): BenchState {
  return events.reduce(project, state);
}

export interface SlotCell {
  slot: number;
  entry: RegistryEntry | null;
  fadedAt: number | null;
}

/** The rows x cols grid the UI renders; slot addresses are 1-based. */
export function slotGrid(state: BenchState, rows: number, cols: number): SlotCell[][] {
  const byAddress = new Map(state.registry.map((entry) => [entry.address, entry]));
  const grid: SlotCell[][] = [];
  for (let r = 0; r < rows; r++) {
    const row: SlotCell[] = [];
    for (let c = 0; c < cols; c++) {
      const slot = r * cols + c + 1;
      row.push({
        slot,
        entry: byAddress.get(slot) ?? null,
        fadedAt: state.fading[slot] ?? null,
      });
    }
    grid.push(row);
  }
  return grid;
}
