"""Wire codec for the bench's CAN-style control messages.

A transmission is a single broadcast frame with an 11-bit arbitration
identifier and a payload of at most 8 bytes.  Byte 0 always carries the
sender's bus address, byte 1 an ASCII tag naming the message type:

    announce   'n'  [sender, 0x6e, min, max, granularity, var_index]   6 bytes
    heartbeat  'h'  [sender, 0x68]                                     2 bytes
    set value  's'  [sender, 0x73, target, var_index, value]           5 bytes

The arbitration identifier of an encoded frame equals the sender
address, so the core component (address 0) always wins bus contention
under lowest-identifier arbitration.  Decoding is strict: payloads with
an unknown tag, a wrong length for their tag, or field values that
violate the message invariants are rejected rather than coerced.

Example:
    >>> from physbus.codec import Heartbeat, encode, decode
    >>> frame = encode(Heartbeat(sender=3))
    >>> frame.hexdump()
    'ID=3 [03 68]'
    >>> decode(frame)
    Heartbeat(sender=3)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

CORE_ADDRESS = 0
MAX_PAYLOAD_LEN = 8
MAX_ARBITRATION_ID = 0x7FF  # 11-bit base-format identifier

TAG_ANNOUNCE = 0x6E  # 'n'
TAG_HEARTBEAT = 0x68  # 'h'
TAG_SET_VALUE = 0x73  # 's'


class CodecError(ValueError):
    """Base class for encode/decode failures."""


class InvalidMessage(CodecError):
    """A message (or decoded payload) violates its field invariants."""


class EmptyPayload(CodecError):
    """The payload has zero bytes."""


class UnknownType(CodecError):
    """Byte 1 is not one of the defined type tags."""


class LengthMismatch(CodecError):
    """The payload length is not the exact length for its type."""


def _check_byte(field: str, value: int) -> None:
    if not isinstance(value, int) or isinstance(value, bool) or not 0 <= value <= 255:
        raise InvalidMessage(f"{field} must be an integer in 0..255, got {value!r}")


@dataclass(frozen=True)
class Frame:
    """One bus transmission: arbitration identifier plus raw payload."""

    arbitration_id: int
    payload: bytes

    def __post_init__(self) -> None:
        if not 0 <= self.arbitration_id <= MAX_ARBITRATION_ID:
            raise ValueError(f"arbitration_id {self.arbitration_id} outside 0..{MAX_ARBITRATION_ID}")
        if not isinstance(self.payload, bytes):
            object.__setattr__(self, "payload", bytes(self.payload))
        if len(self.payload) > MAX_PAYLOAD_LEN:
            raise ValueError(f"payload of {len(self.payload)} bytes exceeds the {MAX_PAYLOAD_LEN}-byte limit")

    def hexdump(self) -> str:
        """Canonical text form used in traces: ``ID=<id> [b0 b1 ...]``."""
        return f"ID={self.arbitration_id} [{' '.join(f'{b:02x}' for b in self.payload)}]"


def parse_hexdump(text: str) -> Frame:
    """Parse the canonical ``ID=<id> [b0 b1 ...]`` form back into a Frame.

    Raises ValueError on any deviation from the format emitted by
    :meth:`Frame.hexdump`.
    """
    text = text.strip()
    if not text.startswith("ID=") or "[" not in text or not text.endswith("]"):
        raise ValueError(f"not a frame hexdump: {text!r}")
    head, _, body = text.partition("[")
    arb = int(head[3:].strip())
    digits = body[:-1].split()
    payload = bytes(int(d, 16) for d in digits)
    return Frame(arbitration_id=arb, payload=payload)


@dataclass(frozen=True)
class Announce:
    """Self-description of one physical variable, sent on power-up.

    ``granularity`` is the number of distinct values the variable can
    render between ``min`` and ``max`` inclusive.
    """

    sender: int
    min: int
    max: int
    granularity: int
    var_index: int

    def __post_init__(self) -> None:
        for field in ("sender", "min", "max", "granularity", "var_index"):
            _check_byte(field, getattr(self, field))
        if self.min > self.max:
            raise InvalidMessage(f"min {self.min} exceeds max {self.max}")
        if not 1 <= self.granularity <= self.max - self.min + 1:
            raise InvalidMessage(
                f"granularity {self.granularity} outside 1..{self.max - self.min + 1} "
                f"for range [{self.min}, {self.max}]"
            )


@dataclass(frozen=True)
class Heartbeat:
    """Liveness probe (from the core) or reply (from a module)."""

    sender: int

    def __post_init__(self) -> None:
        _check_byte("sender", self.sender)


@dataclass(frozen=True)
class SetValue:
    """Command assigning a raw value to one variable of a target module."""

    sender: int
    target: int
    var_index: int
    value: int

    def __post_init__(self) -> None:
        for field in ("sender", "target", "var_index", "value"):
            _check_byte(field, getattr(self, field))
        if self.sender == self.target:
            raise InvalidMessage(f"sender and target are both {self.sender}")


Message = Union[Announce, Heartbeat, SetValue]

ENCODED_LENGTHS = {Announce: 6, Heartbeat: 2, SetValue: 5}
_TAG_FOR_TYPE = {Announce: TAG_ANNOUNCE, Heartbeat: TAG_HEARTBEAT, SetValue: TAG_SET_VALUE}
_LENGTH_FOR_TAG = {
    TAG_ANNOUNCE: ENCODED_LENGTHS[Announce],
    TAG_HEARTBEAT: ENCODED_LENGTHS[Heartbeat],
    TAG_SET_VALUE: ENCODED_LENGTHS[SetValue],
}


def encode(msg: Message) -> Frame:
    """Encode a message into a frame addressed from ``msg.sender``.

    The arbitration identifier is the sender address.  Raises
    InvalidMessage for anything that is not a valid message instance
    (the dataclasses themselves reject invalid field values, so this
    only triggers for foreign types).
    """
    tag = _TAG_FOR_TYPE.get(type(msg))
    if tag is None:
        raise InvalidMessage(f"not a protocol message: {msg!r}")
    if isinstance(msg, Announce):
        payload = bytes([msg.sender, tag, msg.min, msg.max, msg.granularity, msg.var_index])
    elif isinstance(msg, Heartbeat):
        payload = bytes([msg.sender, tag])
    else:
        payload = bytes([msg.sender, tag, msg.target, msg.var_index, msg.value])
    return Frame(arbitration_id=msg.sender, payload=payload)


def decode(frame: Frame) -> Message:
    """Decode a frame's payload into the message it carries.

    The sender is taken from payload byte 0; the arbitration identifier
    is not consulted (the payload is authoritative).  Re-encoding the
    result reproduces the payload byte for byte.

    Raises EmptyPayload, LengthMismatch, UnknownType, or InvalidMessage
    (field values that no valid message can carry, e.g. min > max).
    """
    payload = frame.payload
    if len(payload) == 0:
        raise EmptyPayload("frame carries no payload")
    if len(payload) == 1:
        raise LengthMismatch("1-byte payload cannot hold a type tag")
    tag = payload[1]
    expected = _LENGTH_FOR_TAG.get(tag)
    if expected is None:
        raise UnknownType(f"unknown type tag 0x{tag:02x}")
    if len(payload) != expected:
        raise LengthMismatch(f"tag 0x{tag:02x} requires {expected} bytes, got {len(payload)}")
    sender = payload[0]
    if tag == TAG_ANNOUNCE:
        return Announce(
            sender=sender,
            min=payload[2],
            max=payload[3],
            granularity=payload[4],
            var_index=payload[5],
        )
    if tag == TAG_HEARTBEAT:
        return Heartbeat(sender=sender)
    return SetValue(sender=sender, target=payload[2], var_index=payload[3], value=payload[4])
