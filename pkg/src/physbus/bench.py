"""One runnable rig: backplane + core component + heartbeat pacing.

Both the scenario CLI and the live gateway need the same wiring: a
fresh backplane, a core attached to it, the core's heartbeat tick
rescheduled every interval, module nodes built from descriptor files,
and a chronological trace of everything that happens.  ``Bench`` owns
that glue so the two front ends stay thin.

Trace lines follow the canonical forms::

    t=10 SLOT_POWERED slot=1 addr=1
    t=11 FRAME ID=1 [01 6e 00 ff 08 00]
    t=2000 DISCONNECT_DETECTED addr=1

Callers may append their own lines (command echoes) to ``trace``;
everything the bench logs arrives in event order.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Optional

from .backplane import Backplane, BusConfig, BusEvent, format_event
from .codec import Frame
from .core import CoreEvent, CoreNode, DisconnectDetected, HeartbeatPolicy
from .modules import ModuleDescriptor, ModuleNode

LevelCallback = Callable[[int, int, int, int], None]  # (time, address, var_index, level)

_CONFIG_KEYS = {"n_slots", "rows", "cols", "t_power_ms", "t_bus_ms", "drop_probability", "heartbeat"}
_HEARTBEAT_KEYS = {"interval_ms", "miss_threshold", "reply_window_ms"}


def load_config(doc: dict) -> tuple[BusConfig, HeartbeatPolicy]:
    """Build bus and heartbeat settings from a config document.

    Unknown keys are rejected so typos surface instead of silently
    falling back to defaults.
    """
    if not isinstance(doc, dict):
        raise ValueError("config must be a JSON object")
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    heartbeat = doc.get("heartbeat", {})
    if not isinstance(heartbeat, dict):
        raise ValueError("heartbeat must be an object")
    unknown = set(heartbeat) - _HEARTBEAT_KEYS
    if unknown:
        raise ValueError(f"unknown heartbeat keys: {sorted(unknown)}")
    config = BusConfig(
        n_slots=doc.get("n_slots", 6),
        rows=doc.get("rows", 2),
        cols=doc.get("cols", 3),
        t_power=doc.get("t_power_ms", 10),
        t_bus=doc.get("t_bus_ms", 1),
        drop_probability=doc.get("drop_probability", 0.0),
    )
    policy = HeartbeatPolicy(
        interval_ms=heartbeat.get("interval_ms", 500),
        miss_threshold=heartbeat.get("miss_threshold", 3),
        reply_window_ms=heartbeat.get("reply_window_ms", 50),
    )
    return config, policy


def packaged_descriptors() -> dict[str, Path]:
    """The module descriptors shipped with the package, keyed by short name."""
    root = resources.files("physbus") / "descriptors"
    found = {}
    for entry in root.iterdir():
        if entry.name.endswith(".module.json"):
            found[entry.name.removesuffix(".module.json")] = Path(str(entry))
    return found


class _WatchedModule:
    """Node adapter reporting level changes as they happen."""

    def __init__(self, module: ModuleNode, on_level: Optional[LevelCallback]):
        self.module = module
        self._on_level = on_level

    def on_power(self, address: int, now: int) -> Iterable[Frame]:
        frames = self.module.on_power(address, now)
        if self._on_level is not None:
            for var_index, level in sorted(self.module.levels.items()):
                self._on_level(now, address, var_index, level)
        return frames

    def on_power_loss(self, now: int) -> None:
        self.module.on_power_loss(now)

    def on_frame(self, frame: Frame, now: int) -> Iterable[Frame]:
        before = dict(self.module.levels)
        address = self.module.address
        replies = self.module.on_frame(frame, now)
        if self._on_level is not None and address is not None:
            for var_index, level in sorted(self.module.levels.items()):
                if before.get(var_index) != level:
                    self._on_level(now, address, var_index, level)
        return replies


class Bench:
    """A live platform instance on the virtual clock.

    Optional callbacks stream what happens, in chronological order:
    ``on_bus_event`` for every backplane event, ``on_core_event`` for
    registry changes and disconnect detections, ``on_level`` whenever a
    module's actuation level changes.
    """

    def __init__(
        self,
        config: BusConfig | None = None,
        policy: HeartbeatPolicy | None = None,
        seed: int | None = None,
        on_bus_event: Callable[[BusEvent], None] | None = None,
        on_core_event: Callable[[CoreEvent], None] | None = None,
        on_level: LevelCallback | None = None,
    ):
        self.trace: list[str] = []
        self.detections: list[DisconnectDetected] = []
        self._on_bus_event = on_bus_event
        self._on_core_event = on_core_event
        self._on_level = on_level
        self.backplane = Backplane(config=config, seed=seed, event_sink=self._bus_event)
        self.core = CoreNode(policy=policy, observer=self._core_event)
        self._core_handle = self.backplane.attach_core(self.core)
        self._modules: dict[int, ModuleNode] = {}
        self.backplane.schedule(0, self._tick)

    # -- wiring ----------------------------------------------------------

    def _tick(self, now: int) -> None:
        for frame in self.core.tick(now):
            self.backplane.transmit(self._core_handle, frame, now)
        self.backplane.schedule(now + self.core.policy.interval_ms, self._tick)

    def _bus_event(self, event: BusEvent) -> None:
        self.trace.append(format_event(event))
        if self._on_bus_event is not None:
            self._on_bus_event(event)

    def _core_event(self, event: CoreEvent) -> None:
        if isinstance(event, DisconnectDetected):
            self.detections.append(event)
            self.trace.append(f"t={event.time} DISCONNECT_DETECTED addr={event.address}")
        if self._on_core_event is not None:
            self._on_core_event(event)

    # -- operation ------------------------------------------------------------

    @property
    def now(self) -> int:
        return self.backplane.now

    def plug(self, slot: int, descriptor: ModuleDescriptor, now: int) -> ModuleNode:
        """Insert a fresh module built from a descriptor; returns the node."""
        module = ModuleNode(descriptor)
        self.backplane.plug(slot, _WatchedModule(module, self._on_level), now)
        self._modules[slot] = module
        return module

    def unplug(self, slot: int, now: int) -> None:
        self.backplane.unplug(slot, now)
        self._modules.pop(slot, None)

    def set_value(self, address: int, var_index: int, value: int, now: int) -> Frame:
        """Core-validated dispatch; raises before the bus sees a bad value."""
        frame = self.core.set_variable(address, var_index, value)
        self.backplane.transmit(self._core_handle, frame, now)
        return frame

    def transmit_raw(self, frame: Frame, now: int) -> None:
        """Inject an arbitrary frame from the core's controller, unvalidated."""
        self.backplane.transmit(self._core_handle, frame, now)

    def run_until(self, t_end: int) -> list[BusEvent]:
        return self.backplane.run_until(t_end)

    # -- ground truth (tests, assertions, inspection) ----------------------------

    def module_at(self, slot: int) -> ModuleNode | None:
        return self._modules.get(slot)

    def level_of(self, address: int, var_index: int) -> int:
        """Actual module-side level; addresses equal slot indices."""
        module = self._modules.get(address)
        if module is None:
            raise LookupError(f"no module in slot {address}")
        return module.current_level(var_index)
