"""physbus: a virtual bench for a modular data physicalisation platform.

Modules plug into a simulated six-slot chassis, receive their bus
address from the slot, announce their physical variables and are driven
by the core component over a CAN-style broadcast bus.  Usable as a
library, as a deterministic scenario CLI (``physbus run``) and as a
live session gateway for the browser bench (``physbus serve``).
"""

from .backplane import Backplane, BusConfig
from .bench import Bench, load_config, packaged_descriptors
from .codec import Announce, Frame, Heartbeat, Message, SetValue, decode, encode
from .core import CoreNode, HeartbeatPolicy
from .datafeed import Dataset, MappingRule, normalize, read_csv
from .modules import (
    ModuleDescriptor,
    ModuleNode,
    PhysicalVariableSpec,
    load_descriptor,
    load_descriptor_file,
    quantize,
)

__all__ = [
    "Announce",
    "Backplane",
    "Bench",
    "BusConfig",
    "CoreNode",
    "Dataset",
    "Frame",
    "Heartbeat",
    "HeartbeatPolicy",
    "MappingRule",
    "Message",
    "ModuleDescriptor",
    "ModuleNode",
    "PhysicalVariableSpec",
    "SetValue",
    "decode",
    "encode",
    "load_config",
    "load_descriptor",
    "load_descriptor_file",
    "normalize",
    "packaged_descriptors",
    "quantize",
    "read_csv",
]

__version__ = "0.1.0"
