"""Pluggable module behaviour: self-description, announce, set, heartbeat.

A module is a box implementing one or more physical variables (airflow,
vibration, light, ...).  It is described by a JSON document::

    {
      "module_name": "fan",
      "variables": [
        {"name": "airflow", "unit": "level",
         "min": 0, "max": 255, "granularity": 8, "index": 0}
      ]
    }

``granularity`` is the number of discrete levels the hardware can
render between ``min`` and ``max``; incoming set values are snapped to
the nearest level.  Unknown keys in the document are tolerated so the
format stays extensible.

The :class:`ModuleNode` state machine is driven entirely by backplane
events: it announces its variables when powered, replies to the core's
heartbeat probes, applies valid set commands and silently ignores
everything else (out-of-range values bump a reject counter but never
produce a reply; the 8-byte message vocabulary has no NACK).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .codec import (
    CORE_ADDRESS,
    Announce,
    CodecError,
    Frame,
    Heartbeat,
    Message,
    SetValue,
    decode,
    encode,
)


class DescriptorError(ValueError):
    """Base class for descriptor document problems."""


class ParseError(DescriptorError):
    """The document is not well-formed (bad JSON, missing fields, wrong types)."""


class SpecError(DescriptorError):
    """The document parses but violates a variable invariant."""


class OutOfRange(ValueError):
    """A value lies outside a variable's declared [min, max]."""


class UnknownVariable(LookupError):
    """No variable with the requested index exists."""


class AlreadyPowered(RuntimeError):
    """Power-up requested on a module that is not unpowered."""


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


@dataclass(frozen=True)
class PhysicalVariableSpec:
    """Self-description of one physical variable."""

    name: str
    unit: str
    min: int
    max: int
    granularity: int
    var_index: int

    def __post_init__(self) -> None:
        for field in ("min", "max", "granularity", "var_index"):
            value = getattr(self, field)
            if not isinstance(value, int) or isinstance(value, bool) or not 0 <= value <= 255:
                raise SpecError(f"{field} must be an integer in 0..255, got {value!r}")
        if self.min > self.max:
            raise SpecError(f"variable {self.name!r}: min {self.min} exceeds max {self.max}")
        if not 1 <= self.granularity <= self.max - self.min + 1:
            raise SpecError(
                f"variable {self.name!r}: granularity {self.granularity} outside "
                f"1..{self.max - self.min + 1}"
            )

    def levels(self) -> tuple[int, ...]:
        """The granularity-many evenly spaced levels this variable can render."""
        if self.granularity == 1:
            return (self.min,)
        span = self.max - self.min
        step = span / (self.granularity - 1)
        return tuple(self.min + _round_half_up(i * step) for i in range(self.granularity))


@dataclass(frozen=True)
class ModuleDescriptor:
    """A module's name plus its variables, ordered by index."""

    module_name: str
    variables: tuple[PhysicalVariableSpec, ...]

    def __post_init__(self) -> None:
        if not self.variables:
            raise SpecError("a module must declare at least one variable")
        indices = [v.var_index for v in self.variables]
        if indices != list(range(len(self.variables))):
            raise SpecError(f"variable indices must be contiguous from 0, got {indices}")


def quantize(value: int, spec: PhysicalVariableSpec) -> int:
    """Snap a raw value to the nearest of the variable's discrete levels.

    Exact midpoints between two levels round toward the lower level.
    Raises OutOfRange if the value lies outside [min, max].
    """
    if not spec.min <= value <= spec.max:
        raise OutOfRange(f"value {value} outside [{spec.min}, {spec.max}] of {spec.name!r}")
    best = spec.min
    best_dist = abs(value - best)
    for level in spec.levels():
        dist = abs(value - level)
        if dist < best_dist:
            best, best_dist = level, dist
    return best


def load_descriptor(text: str) -> ModuleDescriptor:
    """Parse a descriptor document.

    Raises ParseError for malformed documents and SpecError when a
    parsed value violates an invariant (granularity 0, min > max,
    non-contiguous indices, ...).
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("descriptor document must be a JSON object")
    try:
        module_name = doc["module_name"]
        raw_variables = doc["variables"]
    except KeyError as exc:
        raise ParseError(f"missing required field {exc.args[0]!r}") from exc
    if not isinstance(module_name, str):
        raise ParseError("module_name must be a string")
    if not isinstance(raw_variables, list):
        raise ParseError("variables must be an array")

    variables = []
    for pos, raw in enumerate(raw_variables):
        if not isinstance(raw, dict):
            raise ParseError(f"variables[{pos}] must be an object")
        try:
            variables.append(
                PhysicalVariableSpec(
                    name=raw["name"],
                    unit=raw["unit"],
                    min=raw["min"],
                    max=raw["max"],
                    granularity=raw["granularity"],
                    var_index=raw["index"],
                )
            )
        except KeyError as exc:
            raise ParseError(f"variables[{pos}] missing field {exc.args[0]!r}") from exc
    return ModuleDescriptor(module_name=module_name, variables=tuple(variables))


def load_descriptor_file(path: str | Path) -> ModuleDescriptor:
    """Load a ``*.module.json`` descriptor from disk."""
    return load_descriptor(Path(path).read_text(encoding="utf-8"))


class Phase(enum.Enum):
    UNPOWERED = "unpowered"
    ADDRESSED = "addressed"
    ANNOUNCED = "announced"


class ModuleNode:
    """State machine of one pluggable module.

    The node holds no timers of its own; every transition is caused by
    a power change or an incoming frame.  Address receipt and the
    announce burst happen together at power-up, so the ADDRESSED phase
    is only ever observed transiently.
    """

    def __init__(self, descriptor: ModuleDescriptor):
        self.descriptor = descriptor
        self.phase = Phase.UNPOWERED
        self.address: int | None = None
        self.levels: dict[int, int] = {}
        self.rejected_sets = 0
        self.undecodable_frames = 0
        self.last_heartbeat_seen: int | None = None

    def variable(self, var_index: int) -> PhysicalVariableSpec:
        for spec in self.descriptor.variables:
            if spec.var_index == var_index:
                return spec
        raise UnknownVariable(f"module {self.descriptor.module_name!r} has no variable {var_index}")

    def on_power(self, address: int, now: int) -> list[Frame]:
        """Power up with a slot-assigned address; returns the announce burst.

        One announce frame per variable, in index order.  Every level
        starts at its variable's minimum.
        """
        if self.phase is not Phase.UNPOWERED:
            raise AlreadyPowered(f"module {self.descriptor.module_name!r} is already powered")
        self.phase = Phase.ADDRESSED
        self.address = address
        self.levels = {v.var_index: v.min for v in self.descriptor.variables}
        frames = [
            encode(
                Announce(
                    sender=address,
                    min=v.min,
                    max=v.max,
                    granularity=v.granularity,
                    var_index=v.var_index,
                )
            )
            for v in self.descriptor.variables
        ]
        self.phase = Phase.ANNOUNCED
        return frames

    def on_power_loss(self, now: int) -> None:
        """Instant power loss: back to unpowered, address forgotten."""
        self.phase = Phase.UNPOWERED
        self.address = None

    def on_frame(self, frame: Frame, now: int) -> list[Frame]:
        """React to a broadcast frame; defensive, never raises onto the bus."""
        if self.phase is not Phase.ANNOUNCED:
            return []
        try:
            msg: Message = decode(frame)
        except CodecError:
            self.undecodable_frames += 1
            return []
        if isinstance(msg, Heartbeat):
            if msg.sender == CORE_ADDRESS:
                self.last_heartbeat_seen = now
                return [encode(Heartbeat(sender=self.address))]
            return []
        if isinstance(msg, SetValue) and msg.target == self.address:
            self._apply_set(msg)
        return []

    def _apply_set(self, msg: SetValue) -> None:
        try:
            spec = self.variable(msg.var_index)
        except UnknownVariable:
            self.rejected_sets += 1
            return
        if not spec.min <= msg.value <= spec.max:
            self.rejected_sets += 1
            return
        self.levels[msg.var_index] = quantize(msg.value, spec)

    def current_level(self, var_index: int) -> int:
        """The stored actuation level of one variable."""
        spec = self.variable(var_index)
        return self.levels.get(spec.var_index, spec.min)
