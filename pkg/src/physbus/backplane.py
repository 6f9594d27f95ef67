"""Discrete-event simulation of the platform's communication substrate.

Two layers are modelled, mirroring the physical architecture:

* the shared main bus: broadcast, message-oriented, one frame delivered
  per step, contention resolved by lowest arbitration identifier
  (ties by enqueue order);
* one point-to-point power/address link per slot: plugging a module
  powers it after a settle delay and hands it the slot index as its
  bus address.

Time is virtual milliseconds.  The whole simulation is single-threaded
and advances only inside :meth:`Backplane.run_until`; commands issued
between runs are scheduled into the same event queue, so a given
script, configuration and seed always produce the identical event log.

Constants: a plugged module powers up ``t_power`` ms after insertion
(startup settle) and a queued frame is delivered ``t_bus`` ms after the
bus picks it up.  Unplugging is instantaneous and lossy: the module
resets and any frames it had queued but not yet won arbitration for
are dropped, as a physical removal mid-transmission would.

The bus is reliable by default; a seeded drop-probability hook exists
for robustness experiments.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Protocol, Union

from .codec import Frame


class BackplaneError(Exception):
    """Base class for bus/slot operation failures."""


class CoreAlreadyAttached(BackplaneError):
    pass


class SlotOccupied(BackplaneError):
    pass


class SlotEmpty(BackplaneError):
    pass


class InvalidSlot(BackplaneError):
    pass


class DetachedHandle(BackplaneError):
    pass


@dataclass(frozen=True)
class BusConfig:
    """Backplane geometry and timing.

    ``rows``/``cols`` are layout metadata for user interfaces; slots are
    addressed 1..n_slots regardless.
    """

    n_slots: int = 6
    rows: int = 2
    cols: int = 3
    t_power: int = 10
    t_bus: int = 1
    drop_probability: float = 0.0

    def __post_init__(self) -> None:
        if self.n_slots < 1:
            raise ValueError("n_slots must be at least 1")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be at least 1")
        if self.t_power < 0:
            raise ValueError("t_power must be non-negative")
        if self.t_bus < 1:
            raise ValueError("t_bus must be at least 1")
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ValueError("drop_probability must be within [0, 1]")


class BusNode(Protocol):
    """Anything attached to the main bus: receives every broadcast frame."""

    def on_frame(self, frame: Frame, now: int) -> Optional[Iterable[Frame]]:
        """Handle a frame; any frames returned are transmitted in reply."""


class PluggableNode(BusNode, Protocol):
    """A module: additionally powered and addressed through its slot."""

    def on_power(self, address: int, now: int) -> Optional[Iterable[Frame]]: ...

    def on_power_loss(self, now: int) -> None: ...


class NodeHandle:
    """Opaque binding of one attached node; invalidated on detach."""

    __slots__ = ("uid", "node", "attached")

    def __init__(self, uid: int, node: BusNode):
        self.uid = uid
        self.node = node
        self.attached = True

    def __repr__(self) -> str:
        state = "attached" if self.attached else "detached"
        return f"<NodeHandle #{self.uid} {state}>"


@dataclass(frozen=True)
class SlotPowered:
    time: int
    slot: int
    address: int


@dataclass(frozen=True)
class SlotUnpowered:
    time: int
    slot: int


@dataclass(frozen=True)
class FrameDelivered:
    time: int
    frame: Frame
    origin: NodeHandle


BusEvent = Union[SlotPowered, SlotUnpowered, FrameDelivered]


def format_event(event: BusEvent) -> str:
    """Canonical trace line for one bus event: ``t=<ms> <EVENT> ...``."""
    if isinstance(event, SlotPowered):
        return f"t={event.time} SLOT_POWERED slot={event.slot} addr={event.address}"
    if isinstance(event, SlotUnpowered):
        return f"t={event.time} SLOT_UNPOWERED slot={event.slot}"
    if isinstance(event, FrameDelivered):
        return f"t={event.time} FRAME {event.frame.hexdump()}"
    raise TypeError(f"not a bus event: {event!r}")


@dataclass
class _Booking:
    """Occupancy record for one slot, created at plug submission."""

    module: PluggableNode
    handle: NodeHandle | None = None


@dataclass
class _Pending:
    """One frame waiting to win arbitration."""

    arbitration_id: int
    seq: int
    frame: Frame
    origin: NodeHandle

    def key(self) -> tuple[int, int]:
        return (self.arbitration_id, self.seq)


class Backplane:
    """The simulated core-component chassis: main bus plus powered slots.

    ``event_sink``, when given, is called with each BusEvent as it is
    logged, in order; useful for streaming trace output.
    """

    def __init__(
        self,
        config: BusConfig | None = None,
        seed: int | None = None,
        event_sink: Callable[[BusEvent], None] | None = None,
    ):
        self.config = config or BusConfig()
        self.now = 0
        self.events: list[BusEvent] = []
        self.dropped_frames = 0
        self._event_sink = event_sink
        self._rng = random.Random(seed)
        self._queue: list[tuple[int, int, Callable[[int], None]]] = []
        self._seq = 0
        self._attached: list[NodeHandle] = []
        self._core_handle: NodeHandle | None = None
        self._bookings: dict[int, _Booking] = {}
        self._pending: list[_Pending] = []
        self._bus_busy = False

    # -- attachment ----------------------------------------------------

    @property
    def core_handle(self) -> NodeHandle:
        if self._core_handle is None:
            raise BackplaneError("no core attached")
        return self._core_handle

    def attach_core(self, core: BusNode) -> NodeHandle:
        """Attach the core component; it hears all subsequent broadcasts."""
        if self._core_handle is not None:
            raise CoreAlreadyAttached("a core component is already attached")
        handle = self._new_handle(core)
        self._core_handle = handle
        return handle

    def detach(self, handle: NodeHandle) -> None:
        """Detach the core (modules leave the bus via unplug)."""
        if not handle.attached:
            raise DetachedHandle(f"{handle!r} is already detached")
        if handle is not self._core_handle:
            raise BackplaneError("only the core handle can be detached directly")
        self._detach(handle)
        self._core_handle = None

    def _new_handle(self, node: BusNode) -> NodeHandle:
        handle = NodeHandle(self._next_seq(), node)
        self._attached.append(handle)
        return handle

    def _detach(self, handle: NodeHandle) -> None:
        handle.attached = False
        self._attached.remove(handle)
        self._pending = [p for p in self._pending if p.origin is not handle]

    # -- slots -----------------------------------------------------------

    def occupied_slots(self) -> list[int]:
        """Ground-truth occupancy (for tests and inspection, not the core)."""
        return sorted(self._bookings)

    def module_at(self, slot: int) -> PluggableNode | None:
        booking = self._bookings.get(slot)
        return booking.module if booking else None

    def plug(self, slot: int, module: PluggableNode, now: int) -> None:
        """Insert a module; it powers up and learns its address at now + t_power."""
        self._check_slot(slot)
        self._check_time(now)
        if slot in self._bookings:
            raise SlotOccupied(f"slot {slot} is occupied")
        booking = _Booking(module=module)
        self._bookings[slot] = booking

        def power_on(t: int) -> None:
            if self._bookings.get(slot) is not booking:
                return  # yanked again before the settle delay elapsed
            handle = self._new_handle(booking.module)
            booking.handle = handle
            self._log(SlotPowered(time=t, slot=slot, address=slot))
            replies = booking.module.on_power(slot, t)
            for frame in replies or ():
                self.transmit(handle, frame, t)

        self._schedule(now + self.config.t_power, power_on)

    def unplug(self, slot: int, now: int) -> None:
        """Remove a module: instant power loss, queued frames dropped."""
        self._check_slot(slot)
        self._check_time(now)
        booking = self._bookings.pop(slot, None)
        if booking is None:
            raise SlotEmpty(f"slot {slot} is empty")

        def power_off(t: int) -> None:
            if booking.handle is None:
                return  # removed before it ever powered up
            self._detach(booking.handle)
            booking.module.on_power_loss(t)
            self._log(SlotUnpowered(time=t, slot=slot))

        self._schedule(now, power_off)

    def _check_slot(self, slot: int) -> None:
        if not 1 <= slot <= self.config.n_slots:
            raise InvalidSlot(f"slot {slot} outside 1..{self.config.n_slots}")

    # -- bus -------------------------------------------------------------

    def transmit(self, handle: NodeHandle, frame: Frame, now: int) -> None:
        """Queue a frame for arbitration on behalf of an attached node."""
        if not handle.attached:
            raise DetachedHandle(f"{handle!r} cannot transmit")
        self._check_time(now)

        def enqueue(t: int) -> None:
            if not handle.attached:
                return  # unplugged while the frame sat in the controller
            self._pending.append(
                _Pending(arbitration_id=frame.arbitration_id, seq=self._next_seq(), frame=frame, origin=handle)
            )
            if not self._bus_busy:
                self._bus_busy = True
                self._schedule(t + self.config.t_bus, self._delivery_step)

        self._schedule(now, enqueue)

    def _delivery_step(self, t: int) -> None:
        if not self._pending:
            self._bus_busy = False
            return
        winner = min(self._pending, key=_Pending.key)
        self._pending.remove(winner)
        dropped = self.config.drop_probability > 0.0 and self._rng.random() < self.config.drop_probability
        if dropped:
            self.dropped_frames += 1
        else:
            self._log(FrameDelivered(time=t, frame=winner.frame, origin=winner.origin))
            for handle in list(self._attached):
                if handle is winner.origin or not handle.attached:
                    continue
                replies = handle.node.on_frame(winner.frame, t)
                for reply in replies or ():
                    self.transmit(handle, reply, t)
        if self._pending:
            self._schedule(t + self.config.t_bus, self._delivery_step)
        else:
            self._bus_busy = False

    # -- clock -------------------------------------------------------------

    def schedule(self, at: int, fn: Callable[[int], None]) -> None:
        """Run ``fn(now)`` at virtual time ``at`` (timer plumbing)."""
        self._check_time(at)
        self._schedule(at, fn)

    def run_until(self, t_end: int) -> list[BusEvent]:
        """Process every event with time <= t_end; returns the new log segment."""
        if t_end < self.now:
            raise ValueError(f"cannot run backwards: now={self.now}, t_end={t_end}")
        start = len(self.events)
        while self._queue and self._queue[0][0] <= t_end:
            time, _, action = heapq.heappop(self._queue)
            self.now = time
            action(time)
        self.now = t_end
        return self.events[start:]

    def _check_time(self, now: int) -> None:
        if now < self.now:
            raise ValueError(f"time {now} is in the past (now={self.now})")

    def _schedule(self, at: int, action: Callable[[int], None]) -> None:
        heapq.heappush(self._queue, (at, self._next_seq(), action))

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _log(self, event: BusEvent) -> None:
        self.events.append(event)
        if self._event_sink is not None:
            self._event_sink(event)
