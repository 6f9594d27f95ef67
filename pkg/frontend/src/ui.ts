/** DOM rendering and user actions for the bench.
 *
 * Rendering is one-way: state in, DOM out. User gestures translate to
 * gateway commands and nothing else; the next stream events carry
 * whatever the gesture caused. Slider previews snap to the announced
 * level grid so what you see while dragging is what the module will
 * render, and slider bounds make out-of-range sets impossible from
 * the UI.
 */

import { BenchState, SlotCell, levelKey, slotGrid } from "./bench.js";
import { GatewayClient } from "./commands.js";
import { levelGrid, snapLevel } from "./levels.js";
import type { Command, PaletteEntry, SessionInfo } from "./wire.js";

const DRAG_TYPE = "application/x-physbus-descriptor";

export class BenchUI {
  private lastGridShape = "";
  private toastSeq = 0;
  private readonly sliders = new Map<string, HTMLInputElement>();

  constructor(
    private readonly root: Document,
    private readonly client: GatewayClient,
    private readonly session: SessionInfo,
    private readonly palette: PaletteEntry[],
  ) {}

  private send(command: Command): void {
    void this.client.send(this.session.session_id, command).then((result) => {
      if (result.status === "rejected") this.toast(`${command.action}: ${result.reason}`);
    });
  }

  setStatus(text: string, live: boolean): void {
    const banner = this.root.getElementById("status");
    if (!banner) return;
    banner.textContent = text;
    banner.className = live ? "live" : "reconnecting";
  }

  renderPalette(): void {
    const host = this.root.getElementById("palette");
    if (!host) return;
    host.replaceChildren();
    for (const entry of this.palette) {
      const item = this.root.createElement("div");
      item.className = "palette-item";
      item.draggable = true;
      item.textContent = entry.module_name;
      const detail = this.root.createElement("small");
      detail.textContent = entry.variables
        .map((v) => `${v.name} ${v.min}..${v.max} (${v.granularity} levels)`)
        .join(", ");
      item.appendChild(detail);
      item.addEventListener("dragstart", (e) => {
        e.dataTransfer?.setData(DRAG_TYPE, entry.name);
      });
      host.appendChild(item);
    }
  }

  update(state: BenchState): void {
    this.renderGrid(state);
    this.renderFrameLog(state);
    this.renderToasts(state);
    const clock = this.root.getElementById("clock");
    if (clock) clock.textContent = `t=${state.time} ms`;
  }

  private renderGrid(state: BenchState): void {
    const host = this.root.getElementById("grid");
    if (!host) return;
    const { rows, cols } = this.session.config;
    const grid = slotGrid(state, rows, cols);
    const shape = JSON.stringify(
      grid.map((row) => row.map((cell) => [cell.entry?.address ?? null, cell.entry?.variables.length ?? 0, cell.fadedAt])),
    );
    if (shape !== this.lastGridShape) {
      this.lastGridShape = shape;
      this.sliders.clear();
      host.replaceChildren();
      host.style.gridTemplateColumns = `repeat(${cols}, 1fr)`;
      for (const row of grid) {
        for (const cell of row) {
          host.appendChild(this.renderCell(cell));
        }
      }
    }
    // in-place level refresh keeps an actively dragged slider alive
    for (const row of grid) {
      for (const cell of row) {
        if (!cell.entry) continue;
        for (const variable of cell.entry.variables) {
          const key = levelKey(cell.entry.address, variable.index);
          const level = state.levels[key];
          const gauge = this.root.getElementById(`gauge-${key}`);
          if (gauge) gauge.textContent = level === undefined ? "-" : String(level);
          const slider = this.sliders.get(key);
          if (slider && this.root.activeElement !== slider && level !== undefined) {
            slider.value = String(level);
          }
        }
      }
    }
  }

  private renderCell(cell: SlotCell): HTMLElement {
    const box = this.root.createElement("div");
    box.className = cell.entry ? "slot occupied" : "slot empty";
    box.dataset.slot = String(cell.slot);
    const title = this.root.createElement("h3");
    title.textContent = `slot ${cell.slot}`;
    box.appendChild(title);

    if (cell.entry) {
      const entry = cell.entry;
      const eject = this.root.createElement("button");
      eject.textContent = "eject";
      eject.addEventListener("click", () => this.send({ action: "unplug", slot: cell.slot }));
      box.appendChild(eject);
      for (const variable of entry.variables) {
        const key = levelKey(entry.address, variable.index);
        const row = this.root.createElement("div");
        row.className = "variable";
        const label = this.root.createElement("span");
        label.textContent = `var ${variable.index}`;
        const gauge = this.root.createElement("strong");
        gauge.id = `gauge-${key}`;
        gauge.textContent = "-";
        const preview = this.root.createElement("em");
        const slider = this.root.createElement("input");
        slider.type = "range";
        slider.min = String(variable.min);
        slider.max = String(variable.max);
        slider.step = "1";
        slider.addEventListener("input", () => {
          preview.textContent = `→ ${snapLevel(Number(slider.value), variable)}`;
        });
        slider.addEventListener("change", () => {
          preview.textContent = "";
          this.send({
            action: "set",
            address: entry.address,
            var_index: variable.index,
            value: Number(slider.value),
          });
        });
        slider.title = `levels: ${levelGrid(variable).join(", ")}`;
        this.sliders.set(key, slider);
        row.append(label, slider, gauge, preview);
        box.appendChild(row);
      }
    } else {
      if (cell.fadedAt !== null) {
        const marker = this.root.createElement("p");
        marker.className = "faded";
        marker.textContent = `disconnected at t=${cell.fadedAt}`;
        box.appendChild(marker);
      }
      box.addEventListener("dragover", (e) => e.preventDefault());
      box.addEventListener("drop", (e) => {
        e.preventDefault();
        const name = e.dataTransfer?.getData(DRAG_TYPE);
        if (name) this.send({ action: "plug", slot: cell.slot, descriptor: name });
      });
    }
    return box;
  }

  private renderFrameLog(state: BenchState): void {
    const host = this.root.getElementById("frames");
    if (!host) return;
    const text = state.frames.map((f) => `t=${f.time} ${f.frame}`).join("\n");
    if (host.textContent !== text) {
      host.textContent = text;
      host.scrollTop = host.scrollHeight;
    }
  }

  private renderToasts(state: BenchState): void {
    for (const rejection of state.rejections) {
      if (rejection.seq <= this.toastSeq) continue;
      this.toastSeq = rejection.seq;
      this.toast(`${rejection.action}: ${rejection.reason}`);
    }
  }

  private toast(text: string): void {
    const host = this.root.getElementById("toasts");
    if (!host) return;
    const note = this.root.createElement("div");
    note.className = "toast";
    note.textContent = text;
    host.appendChild(note);
    setTimeout(() => note.remove(), 4000);
  }

  bindMappingEditor(): void {
    const csvInput = this.root.getElementById("csv-text") as HTMLTextAreaElement | null;
    const loadButton = this.root.getElementById("csv-load");
    const columnSelect = this.root.getElementById("map-column") as HTMLSelectElement | null;
    loadButton?.addEventListener("click", () => {
      const csv = csvInput?.value ?? "";
      if (!csv.trim()) return;
      this.send({ action: "load_csv", csv });
      if (columnSelect) {
        columnSelect.replaceChildren();
        const header = csv.split("\n", 1)[0] ?? "";
        for (const column of header.split(",")) {
          const option = this.root.createElement("option");
          option.value = option.textContent = column.trim();
          columnSelect.appendChild(option);
        }
      }
    });

    const value = (id: string) => (this.root.getElementById(id) as HTMLInputElement | null)?.value ?? "";
    this.root.getElementById("map-add")?.addEventListener("click", () => {
      const command: Command = {
        action: "map",
        column: columnSelect?.value ?? "",
        address: Number(value("map-address")),
        var_index: Number(value("map-var")),
      };
      if (value("map-dmin") !== "" && value("map-dmax") !== "") {
        command.domain_min = Number(value("map-dmin"));
        command.domain_max = Number(value("map-dmax"));
      }
      this.send(command);
      this.appendRuleRow(command);
    });
    this.root.getElementById("replay")?.addEventListener("click", () => {
      this.send({ action: "replay", cadence_ms: Number(value("replay-cadence")) || 100 });
    });
  }

  private appendRuleRow(command: Extract<Command, { action: "map" }>): void {
    const table = this.root.getElementById("rules");
    if (!table) return;
    const row = this.root.createElement("li");
    const domain =
      command.domain_min !== undefined ? ` [${command.domain_min}, ${command.domain_max}]` : " [auto]";
    row.textContent = `${command.column} → addr ${command.address} var ${command.var_index}${domain}`;
    table.appendChild(row);
  }
}
