"""Live session gateway: one simulation per session, streamed to clients.

Each session runs a fresh bench on a paced virtual clock (``ratio``
virtual milliseconds per wall millisecond, default 1.0 so heartbeat
dynamics are watchable).  Clients drive it with JSON command envelopes
and observe it through an ordered event stream; nothing a client does
touches simulator state directly — commands are queued and executed by
the session's own loop at event boundaries.

Wire surface (see docs/wire.md for the full schemas):

    POST /session                    create a session
    POST /session/{id}/command      plug | unplug | set | load_csv | map | replay
    WS   /session/{id}/events       SessionEvent stream, replayable by seq
    GET  /descriptors                the module palette

Events carry a per-session strictly increasing ``seq`` starting at 1
(the initial registry snapshot).  Delivery is at-least-once: after a
reconnect a client resumes with ``?from_seq=<last+1>`` and deduplicates
by seq.
"""

from __future__ import annotations

import asyncio
from contextlib import asynccontextmanager
from typing import Any

from fastapi import Body, FastAPI, WebSocket, WebSocketDisconnect

from .backplane import BackplaneError, BusEvent, FrameDelivered
from .bench import Bench, load_config, packaged_descriptors
from .core import CoreEvent, DisconnectDetected, RegistryChanged
from .datafeed import DatafeedError, MappingRule, bind_rule, read_csv, replay
from .modules import DescriptorError, load_descriptor_file

POLL_INTERVAL_S = 0.005

_COMMAND_ERRORS = (BackplaneError, DatafeedError, DescriptorError, LookupError, ValueError)


class BadCommand(ValueError):
    """Malformed command envelope (missing or ill-typed fields)."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class SessionRunner:
    """Owns one bench, its pacing task and its event log."""

    def __init__(self, session_id: str, config_doc: dict, ratio: float, seed: int | None):
        config, policy = load_config(config_doc)
        self.session_id = session_id
        self.ratio = ratio
        self.events: list[dict] = []
        self.cond = asyncio.Condition()
        self.commands: asyncio.Queue[tuple[dict, asyncio.Future]] = asyncio.Queue()
        self.bench = Bench(
            config=config,
            policy=policy,
            seed=seed,
            on_bus_event=self._bus_event,
            on_core_event=self._core_event,
            on_level=self._level_event,
        )
        self._dataset = None
        self._rules: list[MappingRule] = []
        self._task: asyncio.Task | None = None
        self._emit("registry_changed", 0, registry=self.bench.core.registry_json())

    def start(self) -> None:
        self._task = asyncio.create_task(self._loop())

    async def stop(self) -> None:
        if self._task is not None:
            self._task.cancel()
            try:
                await self._task
            except asyncio.CancelledError:
                pass

    # -- event plumbing -----------------------------------------------------

    def _emit(self, kind: str, time: int, **body: Any) -> None:
        self.events.append({"seq": len(self.events) + 1, "time": time, "type": kind, **body})

    def _bus_event(self, event: BusEvent) -> None:
        if isinstance(event, FrameDelivered):
            self._emit("frame_seen", event.time, frame=event.frame.hexdump())

    def _core_event(self, event: CoreEvent) -> None:
        if isinstance(event, RegistryChanged):
            self._emit("registry_changed", event.time, registry=self.bench.core.registry_json())
        elif isinstance(event, DisconnectDetected):
            self._emit("disconnect_detected", event.time, address=event.address)

    def _level_event(self, time: int, address: int, var_index: int, level: int) -> None:
        self._emit("level_changed", time, address=address, var_index=var_index, level=level)

    # -- the session loop ------------------------------------------------------

    async def _loop(self) -> None:
        loop = asyncio.get_running_loop()
        wall_start = loop.time()
        while True:
            await asyncio.sleep(POLL_INTERVAL_S)
            while not self.commands.empty():
                cmd, future = self.commands.get_nowait()
                result = self._execute(cmd)
                if not future.done():
                    future.set_result(result)
            target = int((loop.time() - wall_start) * 1000.0 * self.ratio)
            if target > self.bench.now:
                self.bench.run_until(target)
            async with self.cond:
                self.cond.notify_all()

    async def submit(self, cmd: dict) -> dict:
        future: asyncio.Future = asyncio.get_running_loop().create_future()
        await self.commands.put((cmd, future))
        return await future

    # -- command execution (inside the loop task) ----------------------------------

    def _execute(self, cmd: dict) -> dict:
        action = cmd.get("action", "<missing>")
        try:
            if not isinstance(action, str):
                raise BadCommand("BadField:action")
            handler = getattr(self, f"_do_{action}", None)
            if handler is None:
                raise BadCommand(f"UnknownAction:{action}")
            handler(cmd)
            return {"status": "accepted"}
        except BadCommand as exc:
            return self._rejected(action, exc.reason)
        except _COMMAND_ERRORS as exc:
            return self._rejected(action, type(exc).__name__)

    def _rejected(self, action: str, reason: str) -> dict:
        self._emit("command_rejected", self.bench.now, action=action, reason=reason)
        return {"status": "rejected", "reason": reason}

    @staticmethod
    def _field(cmd: dict, name: str, kind: type | tuple[type, ...]) -> Any:
        value = cmd.get(name)
        if not isinstance(value, kind) or isinstance(value, bool):
            raise BadCommand(f"BadField:{name}")
        return value

    def _do_plug(self, cmd: dict) -> None:
        slot = self._field(cmd, "slot", int)
        name = self._field(cmd, "descriptor", str)
        path = packaged_descriptors().get(name)
        if path is None:
            raise BadCommand(f"UnknownDescriptor:{name}")
        self.bench.plug(slot, load_descriptor_file(path), self.bench.now)

    def _do_unplug(self, cmd: dict) -> None:
        self.bench.unplug(self._field(cmd, "slot", int), self.bench.now)

    def _do_set(self, cmd: dict) -> None:
        self.bench.set_value(
            self._field(cmd, "address", int),
            self._field(cmd, "var_index", int),
            self._field(cmd, "value", int),
            self.bench.now,
        )

    def _do_load_csv(self, cmd: dict) -> None:
        self._dataset = read_csv(self._field(cmd, "csv", str))
        self._rules = []

    def _do_map(self, cmd: dict) -> None:
        if self._dataset is None:
            raise BadCommand("NoDataset")
        domain = None
        if "domain_min" in cmd or "domain_max" in cmd:
            domain = (
                float(self._field(cmd, "domain_min", (int, float))),
                float(self._field(cmd, "domain_max", (int, float))),
            )
        rule = MappingRule(
            column=self._field(cmd, "column", str),
            address=self._field(cmd, "address", int),
            var_index=self._field(cmd, "var_index", int),
            domain=domain,
            clamp=bool(cmd.get("clamp", True)),
        )
        bound, _ = bind_rule(rule, self._dataset)
        self._rules.append(bound)

    def _do_replay(self, cmd: dict) -> None:
        if self._dataset is None:
            raise BadCommand("NoDataset")
        cadence = self._field(cmd, "cadence_ms", int)

        def diagnostic(now: int, text: str) -> None:
            self._emit("command_rejected", now, action="replay", reason=f"RuleSkipped({text})")

        replay(self._dataset, self._rules, cadence, self.bench.core, self.bench.backplane, diagnostic)


def create_app(ui_dir: str | None = None) -> FastAPI:
    """Build the gateway application (one process, many sessions)."""

    sessions: dict[str, SessionRunner] = {}
    counter = {"next": 1}

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        yield
        for runner in sessions.values():
            await runner.stop()

    app = FastAPI(title="physbus gateway", lifespan=lifespan)

    @app.post("/session")
    async def create_session(body: dict = Body(default={})):
        config_doc = body.get("config", {})
        ratio = body.get("ratio", 1.0)
        seed = body.get("seed")
        if not isinstance(ratio, (int, float)) or ratio <= 0:
            return _error(400, "ratio must be a positive number")
        if seed is not None and not isinstance(seed, int):
            return _error(400, "seed must be an integer")
        session_id = f"s{counter['next']}"
        try:
            runner = SessionRunner(session_id, config_doc, float(ratio), seed)
        except ValueError as exc:
            return _error(400, str(exc))
        counter["next"] += 1
        sessions[session_id] = runner
        runner.start()
        config = runner.bench.backplane.config
        policy = runner.bench.core.policy
        return {
            "session_id": session_id,
            "config": {
                "n_slots": config.n_slots,
                "rows": config.rows,
                "cols": config.cols,
                "t_power_ms": config.t_power,
                "t_bus_ms": config.t_bus,
                "heartbeat": {
                    "interval_ms": policy.interval_ms,
                    "miss_threshold": policy.miss_threshold,
                    "reply_window_ms": policy.reply_window_ms,
                },
            },
            "ratio": runner.ratio,
        }

    @app.post("/session/{session_id}/command")
    async def command(session_id: str, body: dict = Body(...)):
        runner = sessions.get(session_id)
        if runner is None:
            return _error(404, "UnknownSession")
        return await runner.submit(body)

    @app.get("/descriptors")
    async def descriptors():
        palette = []
        for name, path in sorted(packaged_descriptors().items()):
            descriptor = load_descriptor_file(path)
            palette.append(
                {
                    "name": name,
                    "module_name": descriptor.module_name,
                    "variables": [
                        {
                            "name": v.name,
                            "unit": v.unit,
                            "min": v.min,
                            "max": v.max,
                            "granularity": v.granularity,
                            "index": v.var_index,
                        }
                        for v in descriptor.variables
                    ],
                }
            )
        return palette

    @app.websocket("/session/{session_id}/events")
    async def events(ws: WebSocket, session_id: str, from_seq: int = 1):
        await ws.accept()
        runner = sessions.get(session_id)
        if runner is None:
            await ws.send_json({"error": "UnknownSession"})
            await ws.close()
            return
        next_seq = max(1, from_seq)
        try:
            while True:
                while next_seq <= len(runner.events):
                    await ws.send_json(runner.events[next_seq - 1])
                    next_seq += 1
                async with runner.cond:
                    await runner.cond.wait_for(lambda: len(runner.events) >= next_seq)
        except WebSocketDisconnect:
            return

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def _error(status: int, reason: str):
    from fastapi.responses import JSONResponse

    return JSONResponse(status_code=status, content={"detail": reason})
