/** Client-side mirror of a module's level grid.
 *
 * The announced min/max/granularity are the single source of UI
 * affordances: slider bounds, tick marks and the snapped preview all
 * derive from them. The device applies the same snapping on arrival
 * (nearest level, ties toward the lower one), so the preview matches
 * what will actually render — but the server stays authoritative.
 */

import type { AnnouncedVariable } from "./wire.js";

function roundHalfUp(x: number): number {
  return Math.floor(x + 0.5);
}

export function levelGrid(variable: Pick<AnnouncedVariable, "min" | "max" | "granularity">): number[] {
  const { min, max, granularity } = variable;
  if (granularity <= 1) return [min];
  const step = (max - min) / (granularity - 1);
  return Array.from({ length: granularity }, (_, i) => min + roundHalfUp(i * step));
}

export function snapLevel(
  value: number,
  variable: Pick<AnnouncedVariable, "min" | "max" | "granularity">,
): number {
  let best = variable.min;
  let bestDistance = Math.abs(value - best);
  for (const level of levelGrid(variable)) {
    const distance = Math.abs(value - level);
    if (distance < bestDistance) {
      best = level;
      bestDistance = distance;
    }
  }
  return best;
}
