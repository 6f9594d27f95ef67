"""Core component: registry, heartbeat liveness probing, command dispatch.

The core learns which module sits where purely from bus traffic: each
announce message creates or extends a registry entry keyed by the
sender address (which equals the slot index, so the registry doubles
as positional knowledge).  It never consults the backplane's ground
truth, which keeps this state machine portable to real hardware.

Liveness works probe/reply: the core broadcasts a heartbeat with its
own address 0 every ``interval_ms``; each module answers with a
heartbeat carrying its address.  An entry that fails to answer within
``reply_window_ms`` of a probe accumulates a miss; ``miss_threshold``
consecutive misses mark it disconnected and drop it from the registry.
With the default policy (500 ms interval, window 50 ms, threshold 3) a
removed module is detected at most 2000 ms after it disappears.

Observers (trace writers, session gateways) receive RegistryChanged
and DisconnectDetected notifications as they happen.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Union

from .codec import (
    CORE_ADDRESS,
    Announce,
    CodecError,
    Frame,
    Heartbeat,
    SetValue,
    decode,
    encode,
)
from .modules import UnknownVariable

log = logging.getLogger(__name__)


class UnknownModule(LookupError):
    """Dispatch to an address with no registry entry."""


class ValueOutOfRange(ValueError):
    """Core-side validation: value outside the announced [min, max]."""


@dataclass(frozen=True)
class HeartbeatPolicy:
    interval_ms: int = 500
    miss_threshold: int = 3
    reply_window_ms: int = 50

    def __post_init__(self) -> None:
        if self.interval_ms <= 0:
            raise ValueError("interval_ms must be positive")
        if self.miss_threshold < 1:
            raise ValueError("miss_threshold must be at least 1")
        if not 0 < self.reply_window_ms < self.interval_ms:
            raise ValueError("reply_window_ms must be positive and below interval_ms")

    def detection_bound_ms(self) -> int:
        """Upper bound on unplug-to-detection latency."""
        return self.interval_ms * (self.miss_threshold + 1)


@dataclass(frozen=True)
class AnnouncedVariable:
    """What the protocol reveals about a variable (names stay module-side)."""

    var_index: int
    min: int
    max: int
    granularity: int


@dataclass(frozen=True)
class Liveness:
    state: str  # "alive" | "suspect"
    last_reply: int
    missed: int


@dataclass(frozen=True)
class RegistryEntry:
    """Immutable snapshot of what the core knows about one module."""

    address: int
    variables: tuple[AnnouncedVariable, ...]
    liveness: Liveness


@dataclass(frozen=True)
class RegistryChanged:
    """An entry was created, re-announced, or removed."""

    time: int
    address: int


@dataclass(frozen=True)
class DisconnectDetected:
    time: int
    address: int


CoreEvent = Union[RegistryChanged, DisconnectDetected]


@dataclass
class _Entry:
    address: int
    variables: dict[int, AnnouncedVariable]
    last_seen: int
    missed: int = 0


class CoreNode:
    """State machine of the core component (bus address 0).

    Driven by :meth:`on_frame` (bus deliveries) and :meth:`tick`
    (monotone time, called at least once per heartbeat interval).
    Defensive: nothing a module sends can make it raise.
    """

    def __init__(
        self,
        policy: HeartbeatPolicy | None = None,
        observer: Callable[[CoreEvent], None] | None = None,
    ):
        self.policy = policy or HeartbeatPolicy()
        self.unknown_frames = 0
        self.zero_address_announces = 0
        self._observer = observer
        self._registry: dict[int, _Entry] = {}
        self._last_probe: int | None = None
        self._next_probe: int | None = None

    def _notify(self, event: CoreEvent) -> None:
        if self._observer is not None:
            self._observer(event)

    # -- bus input ---------------------------------------------------------

    def on_frame(self, frame: Frame, now: int) -> None:
        """Fold one broadcast frame into the registry."""
        try:
            msg = decode(frame)
        except CodecError:
            self.unknown_frames += 1
            return
        if isinstance(msg, Announce):
            if msg.sender == CORE_ADDRESS:
                self.zero_address_announces += 1
                log.warning("ignoring announce claiming the core address")
                return
            entry = self._registry.get(msg.sender)
            if entry is None:
                entry = _Entry(address=msg.sender, variables={}, last_seen=now)
                self._registry[msg.sender] = entry
            entry.variables[msg.var_index] = AnnouncedVariable(
                var_index=msg.var_index, min=msg.min, max=msg.max, granularity=msg.granularity
            )
            entry.last_seen = now
            entry.missed = 0
            self._notify(RegistryChanged(time=now, address=msg.sender))
        elif isinstance(msg, Heartbeat):
            entry = self._registry.get(msg.sender)
            if entry is None:
                self.unknown_frames += 1
                return
            entry.last_seen = now
            entry.missed = 0
        else:
            self.unknown_frames += 1  # only the core itself issues set commands

    # -- liveness ------------------------------------------------------------

    def tick(self, now: int) -> list[Frame]:
        """Advance the heartbeat schedule; returns frames to broadcast.

        Emits one probe per elapsed interval.  Before each probe, every
        entry that neither replied nor announced within the reply window
        of the previous probe collects a miss; entries reaching the miss
        threshold are dropped and reported as disconnected.
        """
        if self._next_probe is None:
            self._next_probe = now
        if now < self._next_probe:
            return []
        if self._last_probe is not None:
            self._collect_misses(now)
        self._last_probe = now
        self._next_probe = now + self.policy.interval_ms
        return [encode(Heartbeat(sender=CORE_ADDRESS))]

    def _collect_misses(self, now: int) -> None:
        window_start = self._last_probe
        window_end = self._last_probe + self.policy.reply_window_ms
        for address in sorted(self._registry):
            entry = self._registry[address]
            if window_start <= entry.last_seen <= window_end:
                continue
            entry.missed += 1
            if entry.missed >= self.policy.miss_threshold:
                del self._registry[address]
                self._notify(DisconnectDetected(time=now, address=address))
                self._notify(RegistryChanged(time=now, address=address))

    # -- dispatch --------------------------------------------------------------

    def set_variable(self, target: int, var_index: int, value: int) -> Frame:
        """Validate and build the set-value frame for one variable.

        First line of defence: raises UnknownModule, UnknownVariable or
        ValueOutOfRange before anything reaches the bus.
        """
        entry = self._registry.get(target)
        if entry is None:
            raise UnknownModule(f"no module registered at address {target}")
        var = entry.variables.get(var_index)
        if var is None:
            raise UnknownVariable(f"module {target} announced no variable {var_index}")
        if not var.min <= value <= var.max:
            raise ValueOutOfRange(f"value {value} outside announced [{var.min}, {var.max}]")
        return encode(SetValue(sender=CORE_ADDRESS, target=target, var_index=var_index, value=value))

    # -- observation -------------------------------------------------------------

    def find_variable(self, address: int, var_index: int) -> AnnouncedVariable | None:
        entry = self._registry.get(address)
        if entry is None:
            return None
        return entry.variables.get(var_index)

    def registry_snapshot(self) -> list[RegistryEntry]:
        """Immutable copy of the active registry, ordered by address."""
        snapshot = []
        for address in sorted(self._registry):
            entry = self._registry[address]
            variables = tuple(entry.variables[i] for i in sorted(entry.variables))
            state = "alive" if entry.missed == 0 else "suspect"
            snapshot.append(
                RegistryEntry(
                    address=address,
                    variables=variables,
                    liveness=Liveness(state=state, last_reply=entry.last_seen, missed=entry.missed),
                )
            )
        return snapshot

    def registry_json(self) -> list[dict]:
        """Registry snapshot in the published wire shape."""
        return [
            {
                "address": entry.address,
                "liveness": {
                    "state": entry.liveness.state,
                    "last_reply": entry.liveness.last_reply,
                    "missed": entry.liveness.missed,
                },
                "variables": [
                    {
                        "index": var.var_index,
                        "min": var.min,
                        "max": var.max,
                        "granularity": var.granularity,
                    }
                    for var in entry.variables
                ],
            }
            for entry in self.registry_snapshot()
        ]
