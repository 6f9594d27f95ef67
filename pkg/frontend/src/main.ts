/** Boot: create a session, subscribe, wire the UI. */

import { initialBenchState, project } from "./bench.js";
import { GatewayClient } from "./commands.js";
import { EventStream } from "./stream.js";
import { BenchUI } from "./ui.js";

async function boot(): Promise<void> {
  const base = window.location.origin;
  const client = new GatewayClient(base);
  const session = await client.createSession({ ratio: 1.0 });
  const palette = await client.descriptors();

  const ui = new BenchUI(document, client, session, palette);
  ui.renderPalette();
  ui.bindMappingEditor();

  let state = initialBenchState();
  const wsBase = base.replace(/^http/, "ws");
  const stream = new EventStream({
    url: `${wsBase}/session/${session.session_id}/events`,
    onEvent: (event) => {
      state = project(state, event);
      ui.update(state);
    },
    onStatus: (status) => {
      ui.setStatus(status === "live" ? `session ${session.session_id} · live` : status, status === "live");
    },
  });
  stream.start();
}

boot().catch((error) => {
  document.getElementById("status")!.textContent = `failed to start: ${error}`;
});
